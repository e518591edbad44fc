"""Quality metrics, synthetic fixtures, and the seeded A/B experiment.

The experiment protocol: build an outlier-injected MLP, label a synthetic
dataset with the FP32 network itself (so FP32 accuracy is 1.0 by
construction), then measure fake-quantized accuracy and output error twice —
once on the original graph, once after the split rewrite — with identical
data and calibration inputs. The only variable is the rewrite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from trisect.errors import ArgumentError, DimensionError, ParseError, VersionError
from trisect.ir import Graph, Layer, execute
from trisect.model_io import pack_tensors, parse_tensor_record, tokenize, unpack_tensor
from trisect.quant import QuantConfig, QuantEntry, fake_quant_execute
from trisect.rng import Rng, mix64
from trisect.tensor import Tensor
from trisect.transform import RangeEntry, TransformConfig, apply_transforms

DATASET_FORMAT_VERSION = "sqd-1"


@dataclass
class LabeledDataset:
    features: list[Tensor]
    labels: list[int]
    source: str = ""

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise ArgumentError(
                f"{len(self.features)} features vs {len(self.labels)} labels"
            )
        if any(l < 0 for l in self.labels):
            raise ArgumentError("labels must be non-negative class ids")

    def __len__(self) -> int:
        return len(self.features)


def save_dataset(d: LabeledDataset, path: str | Path) -> tuple[Path, Path]:
    """Manifest + blob, reusing the model format's tensor directory."""
    manifest_path = Path(path)
    blob_path = manifest_path.with_suffix(".blob")
    named = [(f"feature{i}", t) for i, t in enumerate(d.features)]
    dir_lines, blob = pack_tensors(named)
    lines = [f"format {DATASET_FORMAT_VERSION}", f"blob {blob_path.name}"]
    lines.extend(dir_lines)
    lines.append("labels " + " ".join(str(l) for l in d.labels))
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    blob_path.write_bytes(blob)
    return manifest_path, blob_path


def load_dataset(path: str | Path) -> LabeledDataset:
    manifest_path = Path(path)
    records = list(tokenize(manifest_path.read_text(encoding="utf-8")))
    if not records:
        raise ParseError(f"{manifest_path}: empty dataset manifest")
    lineno, first = records[0]
    if first[0] != "format" or len(first) != 2:
        raise VersionError(f"line {lineno}: dataset must start with a format record")
    if first[1] != DATASET_FORMAT_VERSION:
        raise VersionError(
            f"unsupported dataset version '{first[1]}' (expected {DATASET_FORMAT_VERSION})"
        )
    blob_name = None
    entries = []
    labels: list[int] = []
    for lineno, tokens in records[1:]:
        if tokens[0] == "blob":
            blob_name = tokens[1]
        elif tokens[0] == "tensor":
            entries.append(parse_tensor_record(tokens, lineno))
        elif tokens[0] == "labels":
            try:
                labels.extend(int(t) for t in tokens[1:])
            except ValueError:
                raise ParseError(f"line {lineno}: labels must be integers") from None
        else:
            raise ParseError(f"line {lineno}: unknown record '{tokens[0]}'")
    if blob_name is None:
        raise ParseError("dataset manifest does not name a blob file")
    blob = (manifest_path.parent / blob_name).read_bytes()
    features = [unpack_tensor(name, dims, off, nb, blob) for name, dims, off, nb in entries]
    if len(labels) != len(features):
        raise ParseError(f"{len(features)} features but {len(labels)} labels")
    return LabeledDataset(features=features, labels=labels, source=str(manifest_path))


def output_error(reference: Sequence[Tensor], candidate: Sequence[Tensor]) -> dict:
    """Pooled {mse, max_abs, sqnr_db} between two runs of outputs.

    sqnr_db = 10*log10(sum ref^2 / sum (ref-cand)^2); None when the error
    power is zero (identical outputs) or the signal is empty.
    """
    if len(reference) != len(candidate):
        raise DimensionError(f"{len(reference)} reference vs {len(candidate)} candidate tensors")
    total = 0
    err_sq = 0.0
    sig_sq = 0.0
    max_abs = 0.0
    for r, c in zip(reference, candidate):
        if r.shape != c.shape:
            raise DimensionError(f"shape mismatch {r.shape} vs {c.shape}")
        for rv, cv in zip(r.data, c.data):
            e = rv - cv
            err_sq += e * e
            sig_sq += rv * rv
            if abs(e) > max_abs:
                max_abs = abs(e)
        total += r.numel
    if total == 0:
        raise ArgumentError("no elements to compare")
    sqnr = 10.0 * math.log10(sig_sq / err_sq) if err_sq > 0.0 and sig_sq > 0.0 else None
    return {"mse": err_sq / total, "max_abs": max_abs, "sqnr_db": sqnr}


def argmax(t: Tensor) -> int:
    """Index of the largest element; ties take the lowest index."""
    best, best_i = t.data[0], 0
    for i, v in enumerate(t.data):
        if v > best:
            best, best_i = v, i
    return best_i


def _sole_input(g: Graph) -> str:
    if len(g.inputs) != 1:
        raise ArgumentError(f"expected a single-input graph, got {sorted(g.inputs)}")
    return next(iter(g.inputs))


def _sole_output(g: Graph) -> str:
    if len(g.outputs) != 1:
        raise ArgumentError(f"expected a single-output graph, got {g.outputs}")
    return g.outputs[0]


def input_dicts(g: Graph, features: Sequence[Tensor]) -> list[dict[str, Tensor]]:
    name = _sole_input(g)
    return [{name: f} for f in features]


def evaluate_accuracy(g: Graph, d: LabeledDataset,
                      cfg: QuantConfig | None = None) -> tuple[float, list[QuantEntry]]:
    """Argmax accuracy plus the per-tensor quantizer entries (empty for FP32).

    With a quantization config, the dataset's own features serve as the
    calibration inputs (the A/B protocol feeds both arms identically).
    """
    if len(d) == 0:
        raise ArgumentError("empty dataset")
    out_name = _sole_output(g)
    samples = input_dicts(g, d.features)
    entries: list[QuantEntry] = []
    if cfg is None:
        outputs = [execute(g, s)[out_name] for s in samples]
    else:
        results, qreport = fake_quant_execute(g, cfg, samples, samples)
        outputs = [r[out_name] for r in results]
        entries = qreport.entries
    correct = 0
    for out, label in zip(outputs, d.labels):
        if len(out.shape) != 1:
            raise DimensionError(f"classifier output must be rank 1, got {out.shape}")
        if argmax(out) == label:
            correct += 1
    return correct / len(d), entries


def accuracy(g: Graph, d: LabeledDataset, cfg: QuantConfig | None = None) -> float:
    """Argmax classification accuracy; ``cfg=None`` runs FP32."""
    return evaluate_accuracy(g, d, cfg)[0]


def generate_outlier_mlp(seed: int, depth: int, width: int,
                         outlier_fraction: float, outlier_scale: float,
                         n_classes: int | None = None) -> Graph:
    """Seeded Linear/GELU MLP with a fraction of weight scalars blown up.

    ``depth`` Linear layers of uniform ``width``; the head emits
    ``n_classes`` logits (defaults to ``width``, keeping every layer the
    same width). Weights and biases are standard normal; exactly
    floor(outlier_fraction * numel) scalars of each weight matrix are
    multiplied by ``outlier_scale`` at seeded positions. Deterministic per
    seed, bit-identical across runs.
    """
    if n_classes is None:
        n_classes = width
    if not 1 <= depth <= 6:
        raise ArgumentError(f"depth must be in [1, 6], got {depth}")
    if width < 2:
        raise ArgumentError(f"width must be >= 2, got {width}")
    if not 0.0 <= outlier_fraction <= 0.1:
        raise ArgumentError(f"outlier_fraction must be in [0, 0.1], got {outlier_fraction}")
    if n_classes < 2:
        raise ArgumentError(f"n_classes must be >= 2, got {n_classes}")
    rng = Rng(mix64(seed, 0x1))
    layers: list[Layer] = []
    prev = "x"
    for i in range(depth):
        out_dim = n_classes if i == depth - 1 else width
        numel = out_dim * width
        values = [rng.normal() for _ in range(numel)]
        n_out = int(outlier_fraction * numel)
        if n_out:
            for idx in rng.sample_indices(numel, n_out):
                values[idx] *= outlier_scale
        weight = Tensor.from_flat((out_dim, width), values)
        bias = Tensor.from_flat((out_dim,), [rng.normal() for _ in range(out_dim)])
        fc = f"fc{i}"
        layers.append(Layer(fc, "Linear", (prev,), params={"weight": weight, "bias": bias}))
        if i < depth - 1:
            act = f"act{i}"
            layers.append(Layer(act, "GELU", (fc,)))
            prev = act
        else:
            prev = fc
    return Graph(layers=layers, inputs={"x": (width,)}, outputs=[prev])


def generate_teacher_dataset(g: Graph, seed: int, n_samples: int) -> LabeledDataset:
    """Standard-normal inputs labeled by the FP32 graph's own argmax."""
    if n_samples < 1:
        raise ArgumentError(f"n_samples must be >= 1, got {n_samples}")
    in_name = _sole_input(g)
    out_name = _sole_output(g)
    shape = g.inputs[in_name]
    numel = 1
    for dim in shape:
        numel *= dim
    rng = Rng(mix64(seed, 0x2))
    features = [
        Tensor.from_flat(shape, [rng.normal() for _ in range(numel)])
        for _ in range(n_samples)
    ]
    labels = [argmax(execute(g, {in_name: f})[out_name]) for f in features]
    return LabeledDataset(features=features, labels=labels, source=f"seed:{seed}")


@dataclass
class EvalReport:
    """Per-layer ranges/scales plus model-level metrics, with the config echo."""

    config: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    entries: list[QuantEntry] = field(default_factory=list)
    split_ranges: list[RangeEntry] = field(default_factory=list)

    def to_text(self) -> str:
        def fmt(v):
            if v is None:
                return "undefined"
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, float):
                return repr(v)
            return str(v)

        lines = ["eval-report"]
        for key in sorted(self.config):
            lines.append(f"config.{key} {fmt(self.config[key])}")
        for key in sorted(self.metrics):
            lines.append(f"metric.{key} {fmt(self.metrics[key])}")
        for e in self.entries:
            lines.append(
                f"entry {e.name} role {e.role} beta {fmt(e.beta)} alpha {fmt(e.alpha)} "
                f"width {fmt(e.alpha - e.beta)} scale {fmt(e.scale)} "
                f"zero_point {e.zero_point} degenerate {fmt(e.degenerate)}"
            )
        for r in self.split_ranges:
            widths = " ".join(repr(w) for w in r.cluster_widths())
            mwidths = " ".join(repr(hi - lo) for lo, hi in r.materialized_ranges)
            lines.append(
                f"splitrange {r.layer_id} k {r.k} original_width {r.original_width!r} "
                f"cluster_widths {widths} materialized_widths {mwidths}"
            )
        return "\n".join(lines) + "\n"


@dataclass
class ExperimentResult:
    seed: int
    bits: int
    weights_only: bool
    acc_fp32: float
    acc_split_fp32: float
    acc_baseline: float
    acc_split: float
    mse_baseline: float
    mse_split: float
    report: EvalReport


def run_experiment(seed: int, bitwidth: int, weights_only: bool = True, *,
                   outlier_fraction: float = 0.01, outlier_scale: float = 50.0,
                   width: int = 64, depth: int = 3, n_classes: int | None = None,
                   n_samples: int = 256) -> ExperimentResult:
    """One seeded A/B run: FP32 vs baseline fake-quant vs rewrite+fake-quant.

    All three evaluations share the same teacher dataset, and both quantized
    arms calibrate on the identical inputs. ``weights_only`` couples the
    quantizer mode and the rewrite (activation splitting is pointless when
    activations stay FP32). Deterministic per (seed, bitwidth).
    """
    if n_classes is None:
        n_classes = width
    g = generate_outlier_mlp(seed, depth, width, outlier_fraction, outlier_scale,
                             n_classes=n_classes)
    dataset = generate_teacher_dataset(g, mix64(seed, 0xDA7A), n_samples)
    out_name = _sole_output(g)
    samples = input_dicts(g, dataset.features)
    ref_outputs = [execute(g, s)[out_name] for s in samples]
    acc_fp32 = sum(
        1 for out, lbl in zip(ref_outputs, dataset.labels) if argmax(out) == lbl
    ) / len(dataset)

    qcfg = QuantConfig(bits=bitwidth, weights_only=weights_only)
    base_results, base_report = fake_quant_execute(g, qcfg, samples, samples)
    base_outputs = [r[out_name] for r in base_results]
    base_err = output_error(ref_outputs, base_outputs)
    acc_baseline = sum(
        1 for out, lbl in zip(base_outputs, dataset.labels) if argmax(out) == lbl
    ) / len(dataset)

    tcfg = TransformConfig(split_weights=True, split_activations=not weights_only,
                           fold_batchnorm=True, kmeans_seed=mix64(seed, 0x5EED))
    split_graph, trep = apply_transforms(g, tcfg)
    split_out_name = _sole_output(split_graph)
    acc_split_fp32 = accuracy(split_graph, dataset, None)
    split_samples = input_dicts(split_graph, dataset.features)
    split_results, split_report = fake_quant_execute(split_graph, qcfg, split_samples,
                                                     split_samples)
    split_outputs = [r[split_out_name] for r in split_results]
    split_err = output_error(ref_outputs, split_outputs)
    acc_split = sum(
        1 for out, lbl in zip(split_outputs, dataset.labels) if argmax(out) == lbl
    ) / len(dataset)

    report = EvalReport(
        config={
            "seed": seed, "bits": bitwidth, "weights_only": weights_only,
            "outlier_fraction": outlier_fraction, "outlier_scale": outlier_scale,
            "width": width, "depth": depth, "n_classes": n_classes,
            "n_samples": n_samples, "mode": "weight-only" if weights_only else "full",
        },
        metrics={
            "acc_fp32": acc_fp32, "acc_split_fp32": acc_split_fp32,
            "acc_baseline": acc_baseline, "acc_split": acc_split,
            "mse_baseline": base_err["mse"], "mse_split": split_err["mse"],
            "sqnr_db_baseline": base_err["sqnr_db"], "sqnr_db_split": split_err["sqnr_db"],
            "max_abs_baseline": base_err["max_abs"], "max_abs_split": split_err["max_abs"],
            "diff": acc_split - acc_baseline,
        },
        entries=list(base_report.entries) + list(split_report.entries),
        split_ranges=list(trep.ranges),
    )
    return ExperimentResult(
        seed=seed, bits=bitwidth, weights_only=weights_only,
        acc_fp32=acc_fp32, acc_split_fp32=acc_split_fp32,
        acc_baseline=acc_baseline, acc_split=acc_split,
        mse_baseline=base_err["mse"], mse_split=split_err["mse"],
        report=report,
    )
