"""Function-preserving graph rewrites that narrow per-layer value ranges.

Three rewrites, composable through :func:`apply_transforms`:

* weight split: a Linear/Conv2d layer's weight+bias scalars are clustered
  (jointly, k<=3) into lower/middle/upper groups; the layer is replaced by
  one copy per cluster, shapes kept by writing 0 into non-owned positions,
  and the copies are recombined with binary Add nodes in lower->upper order.
  Each bias scalar is owned by exactly one copy so the Adds count it once.
* activation split: a ReLU/GELU over last-axis length n >= 3 becomes three
  slices -> three activations -> concat, chunk lengths ceil-first
  (n=7 -> 3,2,2). Elementwise, so the output is bit-identical.
* batch-norm fold: inference-mode normalization is absorbed into a preceding
  single-consumer Linear/Conv2d via w' = g/sqrt(var+eps) * w (per output
  channel), b' = g/sqrt(var+eps) * (b - mean) + beta.

Rewrites are copy-based (inputs are never mutated) and generated layers are
tagged with attr ``origin=split`` so re-running the pipeline skips them.
"""

from __future__ import annotations

import math
from array import array
from dataclasses import dataclass, field
from zlib import crc32

from trisect.cluster import ClusterAssignment, kmeans_1d
from trisect.errors import ArgumentError, KindError
from trisect.ir import ACTIVATION_KINDS, Graph, Layer, infer_shapes, toposort
from trisect.rng import mix64
from trisect.tensor import Tensor

_SPLIT_TAG = "split"
_SUFFIXES = {2: (".lo", ".hi"), 3: (".lo", ".mid", ".hi")}


@dataclass
class TransformConfig:
    split_weights: bool = True
    split_activations: bool = True
    fold_batchnorm: bool = True
    kmeans_seed: int = 0


@dataclass(frozen=True)
class SplitPlan:
    layer_id: str
    mode: str  # weight_cluster | activation_chunk
    assignment: ClusterAssignment | None = None
    chunks: tuple[int, ...] | None = None


@dataclass(frozen=True)
class SkipNote:
    layer_id: str
    reason: str


@dataclass(frozen=True)
class RangeEntry:
    """Range bookkeeping for one weight-split layer.

    ``cluster_ranges`` cover only the scalars owned by each cluster;
    ``materialized_ranges`` include the injected zeros, i.e. the ranges a
    per-tensor quantizer will actually see on the split tensors.
    """

    layer_id: str
    k: int
    centroids: tuple[float, ...]
    original_range: tuple[float, float]
    cluster_ranges: tuple[tuple[float, float], ...]
    materialized_ranges: tuple[tuple[float, float], ...]

    @property
    def original_width(self) -> float:
        return self.original_range[1] - self.original_range[0]

    def cluster_widths(self) -> tuple[float, ...]:
        return tuple(hi - lo for lo, hi in self.cluster_ranges)


@dataclass
class TransformReport:
    plans: list[SplitPlan] = field(default_factory=list)
    skips: list[SkipNote] = field(default_factory=list)
    folded: list[str] = field(default_factory=list)
    ranges: list[RangeEntry] = field(default_factory=list)

    def to_text(self) -> str:
        lines = ["transform-report"]
        for lid in self.folded:
            lines.append(f"folded {lid}")
        entries = {e.layer_id: e for e in self.ranges}
        for plan in self.plans:
            if plan.mode == "weight_cluster":
                a = plan.assignment
                lines.append(f"split {plan.layer_id} mode weight_cluster k {a.k}")
                lines.append("centroids " + " ".join(repr(c) for c in a.centroids))
                e = entries.get(plan.layer_id)
                if e is not None:
                    lo, hi = e.original_range
                    lines.append(f"range.original {lo!r} {hi!r}")
                    for j, (clo, chi) in enumerate(e.cluster_ranges):
                        lines.append(f"range.cluster.{j} {clo!r} {chi!r}")
                    for j, (mlo, mhi) in enumerate(e.materialized_ranges):
                        lines.append(f"range.materialized.{j} {mlo!r} {mhi!r}")
            else:
                chunks = " ".join(str(c) for c in plan.chunks)
                lines.append(f"split {plan.layer_id} mode activation_chunk chunks {chunks}")
        for note in self.skips:
            lines.append(f"skip {note.layer_id} {note.reason}")
        return "\n".join(lines) + "\n"


def _copy_graph(g: Graph) -> Graph:
    layers = [
        Layer(l.id, l.kind, l.inputs, dict(l.attrs), dict(l.params)) for l in g.layers
    ]
    return Graph(layers=layers, inputs=dict(g.inputs), outputs=list(g.outputs))


def _rewire(layers: list[Layer], outputs: list[str], old: str, new: str) -> None:
    for layer in layers:
        if old in layer.inputs:
            layer.inputs = tuple(new if ref == old else ref for ref in layer.inputs)
    for i, out in enumerate(outputs):
        if out == old:
            outputs[i] = new


def _get_layer(g: Graph, layer_id: str) -> Layer:
    for layer in g.layers:
        if layer.id == layer_id:
            return layer
    raise ArgumentError(f"no layer '{layer_id}' in graph")


def _range_entry(layer_id: str, scalars: list[float],
                 assignment: ClusterAssignment) -> RangeEntry:
    groups = assignment.cluster_values(scalars)
    cluster_ranges = tuple((min(grp), max(grp)) for grp in groups)
    materialized = tuple((min(lo, 0.0), max(hi, 0.0)) for lo, hi in cluster_ranges)
    return RangeEntry(
        layer_id=layer_id,
        k=assignment.k,
        centroids=assignment.centroids,
        original_range=(min(scalars), max(scalars)),
        cluster_ranges=cluster_ranges,
        materialized_ranges=materialized,
    )


def _split_weight_layer(g: Graph, layer_id: str, seed: int, expect_kind: str):
    layer = _get_layer(g, layer_id)
    if layer.kind != expect_kind:
        raise KindError(f"{layer_id} is {layer.kind}, expected {expect_kind}")
    if layer.attrs.get("origin") == _SPLIT_TAG:
        return g, None, "already-split"
    weight = layer.params["weight"]
    bias = layer.params.get("bias")
    scalars = list(weight.data) + (list(bias.data) if bias is not None else [])
    if len(set(scalars)) < 2:
        return g, None, "constant-parameters"
    assignment = kmeans_1d(scalars, 3, seed)
    k = assignment.k
    wn = weight.numel
    wlabels = assignment.labels[:wn]
    blabels = assignment.labels[wn:]

    new_layers: list[Layer] = []
    part_ids: list[str] = []
    for j, suffix in enumerate(_SUFFIXES[k]):
        wdata = array("f", (v if lbl == j else 0.0 for v, lbl in zip(weight.data, wlabels)))
        params = {"weight": Tensor(weight.shape, wdata)}
        if bias is not None and any(lbl == j for lbl in blabels):
            bdata = array("f", (v if lbl == j else 0.0 for v, lbl in zip(bias.data, blabels)))
            params["bias"] = Tensor(bias.shape, bdata)
        part_id = layer_id + suffix
        new_layers.append(Layer(part_id, layer.kind, layer.inputs,
                                {**layer.attrs, "origin": _SPLIT_TAG}, params))
        part_ids.append(part_id)
    acc = part_ids[0]
    for j in range(1, k):
        add_id = f"{layer_id}.add{j - 1}"
        new_layers.append(Layer(add_id, "Add", (acc, part_ids[j]), {"origin": _SPLIT_TAG}))
        acc = add_id

    out = _copy_graph(g)
    idx = next(i for i, l in enumerate(out.layers) if l.id == layer_id)
    out.layers[idx:idx + 1] = new_layers
    _rewire(out.layers, out.outputs, layer_id, acc)
    plan = SplitPlan(layer_id, "weight_cluster", assignment=assignment)
    return out, plan, None


def split_linear(g: Graph, layer_id: str, seed: int):
    """Split a Linear layer by weight/bias clusters.

    Returns (graph, plan, skip_reason); exactly one of plan/skip_reason is
    None. The rewritten graph computes the same function: the cluster copies
    sum back to the original output (relative error ~1e-7, bounded 1e-5).
    """
    return _split_weight_layer(g, layer_id, seed, "Linear")


def split_conv(g: Graph, layer_id: str, seed: int):
    """Split a Conv2d layer by weight/bias clusters (see split_linear)."""
    return _split_weight_layer(g, layer_id, seed, "Conv2d")


def chunk_lengths(n: int) -> tuple[int, int, int]:
    """Ceiling-first thirds: l0 >= l1 >= l2 >= 1, summing to n (n >= 3)."""
    l0 = -(-n // 3)
    l1 = -(-(n - l0) // 2)
    return l0, l1, n - l0 - l1


def split_activation(g: Graph, layer_id: str):
    """Split an activation along its last axis into three chunks.

    Slice -> activation -> concat is elementwise, so the output is
    bit-identical to the unsplit layer. Lengths below 3 are skipped.
    """
    layer = _get_layer(g, layer_id)
    if layer.kind not in ACTIVATION_KINDS:
        raise KindError(f"{layer_id} is {layer.kind}, expected an activation")
    if layer.attrs.get("origin") == _SPLIT_TAG:
        return g, None, "already-split"
    shapes = infer_shapes(g)
    in_shape = shapes[layer.inputs[0]]
    axis = len(in_shape) - 1
    n = in_shape[axis]
    if n < 3:
        return g, None, "length-below-3"
    chunks = chunk_lengths(n)

    new_layers: list[Layer] = []
    act_ids: list[str] = []
    start = 0
    for j, length in enumerate(chunks):
        sl_id = f"{layer_id}.sl{j}"
        new_layers.append(Layer(sl_id, "Slice", layer.inputs,
                                {"axis": axis, "start": start, "len": length,
                                 "origin": _SPLIT_TAG}))
        act_id = f"{layer_id}.a{j}"
        new_layers.append(Layer(act_id, layer.kind, (sl_id,), {"origin": _SPLIT_TAG}))
        act_ids.append(act_id)
        start += length
    cat_id = f"{layer_id}.cat"
    new_layers.append(Layer(cat_id, "Concat", tuple(act_ids),
                            {"axis": axis, "origin": _SPLIT_TAG}))

    out = _copy_graph(g)
    idx = next(i for i, l in enumerate(out.layers) if l.id == layer_id)
    out.layers[idx:idx + 1] = new_layers
    _rewire(out.layers, out.outputs, layer_id, cat_id)
    return out, SplitPlan(layer_id, "activation_chunk", chunks=chunks), None


def fold_batchnorm(g: Graph):
    """Fold every foldable BatchNorm into its producer.

    Foldable means: the BatchNorm's sole input is a Linear or Conv2d whose
    only consumer is that BatchNorm. Anything else is skipped with a note.
    Returns (graph, folded_ids, skips).
    """
    out = _copy_graph(g)
    folded: list[str] = []
    skips: list[SkipNote] = []
    for bn_id in [l.id for l in toposort(out) if l.kind == "BatchNorm"]:
        bn = _get_layer(out, bn_id)
        by_id = out.layer_map()
        producer = by_id.get(bn.inputs[0])
        if producer is None or producer.kind not in ("Linear", "Conv2d"):
            skips.append(SkipNote(bn_id, "producer-not-foldable"))
            continue
        if out.consumers(producer.id) != [bn_id]:
            skips.append(SkipNote(bn_id, "multi-consumer-producer"))
            continue
        gamma = bn.params["gamma"].data
        beta = bn.params["beta"].data
        mean = bn.params["running_mean"].data
        var = bn.params["running_var"].data
        eps = float(bn.attrs["epsilon"])
        weight = producer.params["weight"]
        bias = producer.params.get("bias")
        c = weight.shape[0]
        if len(gamma) != c:
            skips.append(SkipNote(bn_id, "channel-mismatch"))
            continue
        scales = [gamma[ch] / math.sqrt(var[ch] + eps) for ch in range(c)]
        per_ch = weight.numel // c
        wdata = array("f", weight.data)
        for ch in range(c):
            s = scales[ch]
            base = ch * per_ch
            for i in range(base, base + per_ch):
                wdata[i] = wdata[i] * s
        bdata = array("f", (
            scales[ch] * ((bias.data[ch] if bias is not None else 0.0) - mean[ch]) + beta[ch]
            for ch in range(c)
        ))
        producer.params = {"weight": Tensor(weight.shape, wdata),
                           "bias": Tensor((c,), bdata)}
        out.layers.remove(bn)
        _rewire(out.layers, out.outputs, bn_id, producer.id)
        folded.append(bn_id)
    return out, folded, skips


def apply_transforms(g: Graph, cfg: TransformConfig) -> tuple[Graph, TransformReport]:
    """Full rewrite pipeline: fold batch-norm, split weights, split activations.

    Each stage is applied to every eligible layer in topological order.
    Normalization scale/shift parameters are never clustered: BatchNorm
    layers are folded or left intact, never weight-split. Returns the
    rewritten graph and a report of plans, ranges and skips; the input graph
    is not modified.
    """
    report = TransformReport()
    work = _copy_graph(g)
    if cfg.fold_batchnorm:
        work, folded, skips = fold_batchnorm(work)
        report.folded.extend(folded)
        report.skips.extend(skips)
    if cfg.split_weights:
        targets = [(l.id, l.kind) for l in toposort(work) if l.kind in ("Linear", "Conv2d")]
        for lid, kind in targets:
            # capture the scalars the clustering will see (post-fold values)
            layer = _get_layer(work, lid)
            scalars = list(layer.params["weight"].data)
            if "bias" in layer.params:
                scalars.extend(layer.params["bias"].data)
            seed = mix64(cfg.kmeans_seed, crc32(lid.encode()))
            splitter = split_linear if kind == "Linear" else split_conv
            work, plan, skip = splitter(work, lid, seed)
            if plan is None:
                report.skips.append(SkipNote(lid, skip))
            else:
                report.plans.append(plan)
                report.ranges.append(_range_entry(lid, scalars, plan.assignment))
    if cfg.split_activations:
        targets = [l.id for l in toposort(work)
                   if l.kind in ACTIVATION_KINDS and l.attrs.get("origin") != _SPLIT_TAG]
        for lid in targets:
            work, plan, skip = split_activation(work, lid)
            if plan is None:
                report.skips.append(SkipNote(lid, skip))
            else:
                report.plans.append(plan)
    return work, report
