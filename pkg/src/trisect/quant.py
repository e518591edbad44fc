"""Affine/symmetric quantization, calibration, and fake-quantized execution.

The mapping is q = clamp(INT(S*x) + Z, qmin, qmax) with S = (qmax-qmin)/(alpha-beta)
and Z = qmin - INT(S*beta); dequantization is x_hat = (q - Z)/S. INT() rounds
to nearest with ties away from zero everywhere. Symmetric mode widens the
calibration range to alpha' = max(|alpha|, |beta|) = -beta', which forces Z = 0.

Fake quantization simulates integer inference by a quantize->dequantize round
trip in FP32 execution; codes are held in 64-bit integers regardless of the
nominal bit-width (accuracy and resolution are measured, not memory).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from trisect._backend import kernels
from trisect._pykernels import _round_away
from trisect.errors import ArgumentError, CalibrationError
from trisect.ir import Graph, Layer, execute
from trisect.tensor import Tensor, f32, int_range

_Z_LIMIT = 1 << 31

_QUANTIZED_OUTPUT_KINDS = frozenset({"Linear", "Conv2d", "ReLU", "GELU"})
_QUANTIZED_PARAMS = ("weight", "bias")


@dataclass(frozen=True)
class QuantParams:
    qmin: int
    qmax: int
    scale: float
    zero_point: int
    symmetric: bool
    degenerate: bool = False


@dataclass(frozen=True)
class CalibRange:
    beta: float
    alpha: float
    method: str = "minmax"


@dataclass
class QuantConfig:
    """Quantizer settings: a bit-width in {2,4,8} or an explicit integer range."""

    bits: int | None = 8
    qmin: int | None = None
    qmax: int | None = None
    symmetric: bool = False
    activation_calibration: str = "minmax"  # or "percentile"
    percentile: float = 99.0
    weights_only: bool = False

    def __post_init__(self):
        if self.qmin is not None or self.qmax is not None:
            if self.qmin is None or self.qmax is None:
                raise ArgumentError("explicit ranges need both qmin and qmax")
            if self.qmin >= self.qmax:
                raise ArgumentError(f"qmin {self.qmin} must be < qmax {self.qmax}")
        elif self.bits not in (2, 4, 8):
            raise ArgumentError(f"unsupported bit-width {self.bits} (choose 2, 4 or 8)")
        if self.activation_calibration not in ("minmax", "percentile"):
            raise ArgumentError(
                f"unknown calibration method '{self.activation_calibration}'"
            )
        if self.activation_calibration == "percentile" and not 50.0 < self.percentile <= 100.0:
            raise ArgumentError(f"percentile must be in (50, 100], got {self.percentile}")

    def int_range(self) -> tuple[int, int]:
        if self.qmin is not None:
            return self.qmin, self.qmax
        return int_range(self.bits)


@dataclass(frozen=True)
class IntTensor:
    shape: tuple[int, ...]
    data: object  # array('q') of codes

    def tolist(self) -> list[int]:
        return list(self.data)


def compute_qparams(r: CalibRange, qmin: int, qmax: int, symmetric: bool) -> QuantParams:
    """Scale and zero-point for mapping [beta, alpha] onto [qmin, qmax].

    A degenerate range (alpha == beta) gets the guard values S=1,
    Z = qmin - INT(beta) clamped, and is flagged so reports can surface it.
    """
    if qmin >= qmax:
        raise ArgumentError(f"qmin {qmin} must be < qmax {qmax}")
    alpha, beta = float(r.alpha), float(r.beta)
    if alpha < beta:
        raise ArgumentError(f"calibration range has alpha {alpha} < beta {beta}")
    if symmetric:
        bound = max(abs(alpha), abs(beta))
        alpha, beta = bound, -bound
    width = alpha - beta
    if width == 0.0:
        zp = qmin - _round_away(beta) if abs(beta) < 4.5e15 else 0
        zp = max(-_Z_LIMIT, min(_Z_LIMIT, zp))
        return QuantParams(qmin, qmax, 1.0, 0 if symmetric else zp, symmetric, degenerate=True)
    scale = f32((qmax - qmin) / width)
    if symmetric:
        zp = 0
    else:
        zp = qmin - _round_away(scale * beta)
        zp = max(-_Z_LIMIT, min(_Z_LIMIT, zp))
    return QuantParams(qmin, qmax, scale, zp, symmetric)


def quantize(x: Tensor, qp: QuantParams) -> IntTensor:
    """q = clamp(INT(S*x) + Z, qmin, qmax), elementwise."""
    return IntTensor(x.shape, kernels.quantize(x.data, qp.scale, qp.zero_point, qp.qmin, qp.qmax))


def dequantize(q: IntTensor, qp: QuantParams) -> Tensor:
    """x_hat = (q - Z)/S, elementwise."""
    return Tensor(q.shape, kernels.dequantize(q.data, qp.scale, qp.zero_point))


def fake_quantize(x: Tensor, qp: QuantParams) -> Tensor:
    """dequantize(quantize(x)) in one pass."""
    return Tensor(x.shape, kernels.fake_quant(x.data, qp.scale, qp.zero_point, qp.qmin, qp.qmax))


def _percentile(sorted_vals: list[float], q: float) -> float:
    """Linear-interpolated empirical percentile of pre-sorted values."""
    n = len(sorted_vals)
    if n == 1:
        return sorted_vals[0]
    pos = (n - 1) * q / 100.0
    lo = int(pos)
    if lo >= n - 1:
        return sorted_vals[n - 1]
    frac = pos - lo
    return sorted_vals[lo] + frac * (sorted_vals[lo + 1] - sorted_vals[lo])


def calibrate(values: Iterable[Tensor], method: str = "minmax",
              percentile: float = 99.0) -> CalibRange:
    """Clipping range over a stream of tensors.

    minmax takes the global (min, max); percentile(p) takes the
    (P_{100-p}, P_p) empirical percentiles of the pooled scalars with linear
    interpolation, clipping both tails symmetrically in rank.
    """
    if method == "minmax":
        lo = hi = None
        for t in values:
            tlo, thi = kernels.min_max(t.data)
            lo = tlo if lo is None else min(lo, tlo)
            hi = thi if hi is None else max(hi, thi)
        if lo is None:
            raise CalibrationError("no tensors observed during calibration")
        return CalibRange(beta=lo, alpha=hi, method="minmax")
    if method != "percentile":
        raise ArgumentError(f"unknown calibration method '{method}'")
    if not 50.0 < percentile <= 100.0:
        raise ArgumentError(f"percentile must be in (50, 100], got {percentile}")
    pooled: list[float] = []
    for t in values:
        pooled.extend(t.data)
    if not pooled:
        raise CalibrationError("no tensors observed during calibration")
    pooled.sort()
    return CalibRange(
        beta=_percentile(pooled, 100.0 - percentile),
        alpha=_percentile(pooled, percentile),
        method=f"percentile:{percentile:g}",
    )


@dataclass(frozen=True)
class QuantEntry:
    name: str
    role: str  # weight | bias | activation
    beta: float
    alpha: float
    scale: float
    zero_point: int
    degenerate: bool


@dataclass
class QuantReport:
    weights_only: bool
    symmetric: bool
    qmin: int
    qmax: int
    activation_calibration: str
    entries: list[QuantEntry] = field(default_factory=list)

    def degenerate_names(self) -> list[str]:
        return [e.name for e in self.entries if e.degenerate]


def quantize_graph_params(g: Graph, cfg: QuantConfig) -> tuple[Graph, list[QuantEntry]]:
    """Copy of the graph with every Linear/Conv2d weight and bias replaced by
    its quantize->dequantize image (per-tensor min-max ranges).

    Normalization-layer parameters are left untouched: they are not
    semantically weights; fold them first if their effect should be
    quantized.
    """
    qmin, qmax = cfg.int_range()
    entries: list[QuantEntry] = []
    layers: list[Layer] = []
    for layer in g.layers:
        if layer.kind in ("Linear", "Conv2d"):
            params = dict(layer.params)
            for pname in _QUANTIZED_PARAMS:
                t = params.get(pname)
                if t is None:
                    continue
                lo, hi = kernels.min_max(t.data)
                qp = compute_qparams(CalibRange(lo, hi), qmin, qmax, cfg.symmetric)
                params[pname] = fake_quantize(t, qp)
                entries.append(QuantEntry(f"{layer.id}.{pname}", pname, lo, hi,
                                          qp.scale, qp.zero_point, qp.degenerate))
            layers.append(Layer(layer.id, layer.kind, layer.inputs,
                                dict(layer.attrs), params))
        else:
            layers.append(Layer(layer.id, layer.kind, layer.inputs,
                                dict(layer.attrs), dict(layer.params)))
    return Graph(layers=layers, inputs=dict(g.inputs), outputs=list(g.outputs)), entries


def _calibrate_activations(g: Graph, cfg: QuantConfig,
                           calib_inputs: Sequence[dict[str, Tensor]]) -> dict[str, CalibRange]:
    minmax: dict[str, tuple[float, float]] = {}
    pooled: dict[str, list[float]] = {}
    use_percentile = cfg.activation_calibration == "percentile"

    def observe(layer: Layer, t: Tensor) -> Tensor:
        if layer.kind in _QUANTIZED_OUTPUT_KINDS:
            if use_percentile:
                pooled.setdefault(layer.id, []).extend(t.data)
            else:
                lo, hi = kernels.min_max(t.data)
                old = minmax.get(layer.id)
                minmax[layer.id] = (lo, hi) if old is None else (min(old[0], lo), max(old[1], hi))
        return t

    for sample in calib_inputs:
        execute(g, sample, node_hook=observe)
    ranges: dict[str, CalibRange] = {}
    if use_percentile:
        for lid, vals in pooled.items():
            vals.sort()
            ranges[lid] = CalibRange(
                beta=_percentile(vals, 100.0 - cfg.percentile),
                alpha=_percentile(vals, cfg.percentile),
                method=f"percentile:{cfg.percentile:g}",
            )
    else:
        for lid, (lo, hi) in minmax.items():
            ranges[lid] = CalibRange(lo, hi, "minmax")
    return ranges


def fake_quant_execute(
    g: Graph,
    cfg: QuantConfig,
    calib_inputs: Sequence[dict[str, Tensor]] | None,
    eval_inputs: Sequence[dict[str, Tensor]],
) -> tuple[list[dict[str, Tensor]], QuantReport]:
    """Simulated quantized inference over ``eval_inputs``.

    Pass 1 runs the FP32 graph over ``calib_inputs`` and records a clipping
    range for every Linear/Conv2d output and every activation output (skipped
    entirely when ``cfg.weights_only``). Pass 2 executes with each weight and
    bias replaced by its quantize->dequantize image and each recorded
    intermediate replaced the same way, per-tensor granularity. Reentrant:
    all calibration state is local to the call.
    """
    qmin, qmax = cfg.int_range()
    report = QuantReport(cfg.weights_only, cfg.symmetric, qmin, qmax,
                         cfg.activation_calibration if not cfg.weights_only else "none")
    qgraph, entries = quantize_graph_params(g, cfg)
    report.entries.extend(entries)

    hook = None
    if not cfg.weights_only:
        if not calib_inputs:
            raise CalibrationError(
                "activation quantization needs at least one calibration input"
            )
        act_params: dict[str, QuantParams] = {}
        for lid, crange in _calibrate_activations(g, cfg, calib_inputs).items():
            qp = compute_qparams(crange, qmin, qmax, cfg.symmetric)
            act_params[lid] = qp
            report.entries.append(QuantEntry(lid, "activation", crange.beta, crange.alpha,
                                             qp.scale, qp.zero_point, qp.degenerate))

        def hook(layer: Layer, t: Tensor) -> Tensor:
            qp = act_params.get(layer.id)
            return t if qp is None else fake_quantize(t, qp)

    outputs = [execute(qgraph, sample, node_hook=hook) for sample in eval_inputs]
    return outputs, report
