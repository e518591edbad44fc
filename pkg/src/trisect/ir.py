"""Model graph IR: layers, validation, shape inference and the executor.

Graphs are DAGs of named layers; a layer's ``inputs`` reference either graph
input names or other layer ids (one producer per name). Graphs are immutable
after construction by convention, so ``execute`` is safe to call concurrently
from multiple threads on a shared graph.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from trisect import tensor as T
from trisect.errors import ArgumentError, DimensionError, ValidationError
from trisect.tensor import Tensor

LAYER_KINDS = frozenset(
    {"Linear", "Conv2d", "ReLU", "GELU", "BatchNorm", "Add", "Concat", "Slice"}
)

ACTIVATION_KINDS = frozenset({"ReLU", "GELU"})

_BN_PARAMS = ("gamma", "beta", "running_mean", "running_var")


@dataclass
class Layer:
    id: str
    kind: str
    inputs: tuple[str, ...] = ()
    attrs: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = tuple(self.inputs)


@dataclass
class Graph:
    layers: list[Layer]
    inputs: dict[str, tuple[int, ...]]
    outputs: list[str]

    def layer_map(self) -> dict[str, Layer]:
        return {layer.id: layer for layer in self.layers}

    def consumers(self, layer_id: str) -> list[str]:
        """Ids of layers consuming ``layer_id``, plus '<output>' if it is a graph output."""
        out = [l.id for l in self.layers if layer_id in l.inputs]
        if layer_id in self.outputs:
            out.append("<output>")
        return out


@dataclass(frozen=True)
class Diagnostic:
    node: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.node}: {self.rule}: {self.message}"


def toposort(g: Graph) -> list[Layer]:
    """Deterministic topological order (declaration order breaks ties)."""
    by_id = g.layer_map()
    indeg = {layer.id: 0 for layer in g.layers}
    consumers: dict[str, list[str]] = {layer.id: [] for layer in g.layers}
    for layer in g.layers:
        for ref in layer.inputs:
            if ref in by_id:
                indeg[layer.id] += 1
                consumers[ref].append(layer.id)
    ready = deque(layer.id for layer in g.layers if indeg[layer.id] == 0)
    order: list[Layer] = []
    while ready:
        lid = ready.popleft()
        order.append(by_id[lid])
        for cid in consumers[lid]:
            indeg[cid] -= 1
            if indeg[cid] == 0:
                ready.append(cid)
    if len(order) != len(g.layers):
        stuck = sorted(lid for lid, d in indeg.items() if d > 0)
        raise ValidationError(
            [Diagnostic(stuck[0], "cycle", f"cycle through {', '.join(stuck)}")]
        )
    return order


def _infer_layer_shape(layer: Layer, in_shapes: list[tuple[int, ...]]) -> tuple[int, ...]:
    kind = layer.kind
    if kind == "Linear":
        (x,) = in_shapes
        w = layer.params["weight"].shape
        if len(x) != 1 or x[0] != w[1]:
            raise DimensionError(f"Linear expects input [{w[1]}], got {x}")
        return (w[0],)
    if kind == "Conv2d":
        (x,) = in_shapes
        w = layer.params["weight"].shape
        stride = int(layer.attrs.get("stride", 1))
        pad = int(layer.attrs.get("padding", 0))
        if len(x) != 3 or x[0] != w[1]:
            raise DimensionError(f"Conv2d expects input [{w[1]},H,W], got {x}")
        kh, kw = w[2], w[3]
        if kh > x[1] + 2 * pad or kw > x[2] + 2 * pad:
            raise DimensionError(f"kernel {kh}x{kw} larger than padded input {x}")
        oh = (x[1] + 2 * pad - kh) // stride + 1
        ow = (x[2] + 2 * pad - kw) // stride + 1
        return (w[0], oh, ow)
    if kind in ACTIVATION_KINDS:
        (x,) = in_shapes
        return x
    if kind == "BatchNorm":
        (x,) = in_shapes
        c = layer.params["gamma"].shape[0]
        if x[0] != c:
            raise DimensionError(f"BatchNorm over {c} channels got input {x}")
        return x
    if kind == "Add":
        first = in_shapes[0]
        for s in in_shapes[1:]:
            if s != first:
                raise DimensionError(f"Add inputs differ: {first} vs {s}")
        return first
    if kind == "Concat":
        axis = int(layer.attrs["axis"])
        first = in_shapes[0]
        if not 0 <= axis < len(first):
            raise DimensionError(f"Concat axis {axis} out of range for {first}")
        total = 0
        for s in in_shapes:
            if len(s) != len(first) or any(
                s[i] != first[i] for i in range(len(first)) if i != axis
            ):
                raise DimensionError(f"Concat shapes differ off axis {axis}: {first} vs {s}")
            total += s[axis]
        out = list(first)
        out[axis] = total
        return tuple(out)
    if kind == "Slice":
        (x,) = in_shapes
        axis = int(layer.attrs["axis"])
        start = int(layer.attrs["start"])
        length = int(layer.attrs["len"])
        if not 0 <= axis < len(x):
            raise DimensionError(f"Slice axis {axis} out of range for {x}")
        if start < 0 or length < 1 or start + length > x[axis]:
            raise DimensionError(
                f"Slice [{start}:{start + length}) out of bounds on axis {axis} of {x}"
            )
        out = list(x)
        out[axis] = length
        return tuple(out)
    raise DimensionError(f"unknown kind {kind}")


def infer_shapes(g: Graph) -> dict[str, tuple[int, ...]]:
    """Static output shape per value name; raises DimensionError naming the node."""
    shapes: dict[str, tuple[int, ...]] = dict(g.inputs)
    for layer in toposort(g):
        try:
            in_shapes = [shapes[ref] for ref in layer.inputs]
        except KeyError as exc:
            raise DimensionError(f"{layer.id}: missing input {exc.args[0]}") from None
        try:
            shapes[layer.id] = _infer_layer_shape(layer, in_shapes)
        except (DimensionError, KeyError, ValueError) as exc:
            raise DimensionError(f"{layer.id}: {exc}") from None
    return shapes


def _check_param(layer: Layer, name: str, rank: int | None, diags: list[Diagnostic]) -> Tensor | None:
    t = layer.params.get(name)
    if t is None:
        diags.append(Diagnostic(layer.id, "param", f"{layer.kind} is missing param '{name}'"))
        return None
    if rank is not None and len(t.shape) != rank:
        diags.append(
            Diagnostic(layer.id, "shape", f"{layer.kind} {name} must be rank {rank}, got {t.shape}")
        )
        return None
    return t


def validate(g: Graph) -> list[Diagnostic]:
    """All structural and shape invariants; empty list means the graph is well formed."""
    diags: list[Diagnostic] = []
    seen: set[str] = set(g.inputs)
    for layer in g.layers:
        if layer.id in seen:
            diags.append(Diagnostic(layer.id, "duplicate-id", "more than one producer for this id"))
        seen.add(layer.id)
    known = seen
    for layer in g.layers:
        if layer.kind not in LAYER_KINDS:
            diags.append(Diagnostic(layer.id, "kind", f"unknown layer kind '{layer.kind}'"))
            continue
        for ref in layer.inputs:
            if ref not in known:
                diags.append(Diagnostic(layer.id, "missing-input", f"input '{ref}' does not exist"))
        _validate_layer(layer, diags)
    for out in g.outputs:
        if out not in known:
            diags.append(Diagnostic(out, "missing-output", "graph output does not exist"))
    if not g.outputs:
        diags.append(Diagnostic("<graph>", "outputs", "graph declares no outputs"))
    if diags:
        return diags
    try:
        toposort(g)
    except ValidationError as exc:
        return list(exc.diagnostics)
    try:
        infer_shapes(g)
    except DimensionError as exc:
        node, _, msg = str(exc).partition(": ")
        diags.append(Diagnostic(node, "shape", msg or str(exc)))
    return diags


def _validate_layer(layer: Layer, diags: list[Diagnostic]) -> None:
    kind = layer.kind
    n_in = len(layer.inputs)
    if kind in ("Linear", "Conv2d", "ReLU", "GELU", "BatchNorm", "Slice") and n_in != 1:
        diags.append(Diagnostic(layer.id, "arity", f"{kind} takes exactly 1 input, got {n_in}"))
    if kind == "Add" and n_in < 2:
        diags.append(Diagnostic(layer.id, "arity", f"Add takes at least 2 inputs, got {n_in}"))
    if kind == "Concat" and n_in < 1:
        diags.append(Diagnostic(layer.id, "arity", "Concat takes at least 1 input"))
    if kind == "Linear":
        w = _check_param(layer, "weight", 2, diags)
        b = layer.params.get("bias")
        if w is not None and b is not None and b.shape != (w.shape[0],):
            diags.append(Diagnostic(layer.id, "shape", f"bias {b.shape} does not match weight {w.shape}"))
    elif kind == "Conv2d":
        w = _check_param(layer, "weight", 4, diags)
        b = layer.params.get("bias")
        if w is not None and b is not None and b.shape != (w.shape[0],):
            diags.append(Diagnostic(layer.id, "shape", f"bias {b.shape} does not match weight {w.shape}"))
        if int(layer.attrs.get("stride", 1)) < 1:
            diags.append(Diagnostic(layer.id, "attr", "stride must be >= 1"))
        if int(layer.attrs.get("padding", 0)) < 0:
            diags.append(Diagnostic(layer.id, "attr", "padding must be >= 0"))
    elif kind == "BatchNorm":
        vecs = [_check_param(layer, name, 1, diags) for name in _BN_PARAMS]
        lens = {v.shape[0] for v in vecs if v is not None}
        if len(lens) > 1:
            diags.append(Diagnostic(layer.id, "shape", "BatchNorm parameter vectors differ in length"))
        eps = layer.attrs.get("epsilon")
        if eps is None or float(eps) < 0:
            diags.append(Diagnostic(layer.id, "attr", "BatchNorm needs attr epsilon >= 0"))
    elif kind == "Concat":
        if "axis" not in layer.attrs:
            diags.append(Diagnostic(layer.id, "attr", "Concat needs attr axis"))
    elif kind == "Slice":
        for name in ("axis", "start", "len"):
            if name not in layer.attrs:
                diags.append(Diagnostic(layer.id, "attr", f"Slice needs attr {name}"))


def _eval_layer(layer: Layer, ins: list[Tensor]) -> Tensor:
    kind = layer.kind
    if kind == "Linear":
        (x,) = ins
        w = layer.params["weight"]
        if len(x.shape) != 1 or x.shape[0] != w.shape[1]:
            raise DimensionError(f"Linear expects input [{w.shape[1]}], got {x.shape}")
        bias = layer.params.get("bias")
        data = T.kernels.matvec_bias(w.data, x.data, None if bias is None else bias.data,
                                     w.shape[0], w.shape[1])
        return Tensor((w.shape[0],), data)
    if kind == "Conv2d":
        (x,) = ins
        return T.conv2d(x, layer.params["weight"], layer.params.get("bias"),
                        int(layer.attrs.get("stride", 1)), int(layer.attrs.get("padding", 0)))
    if kind == "ReLU":
        return T.relu(ins[0])
    if kind == "GELU":
        return T.gelu(ins[0])
    if kind == "BatchNorm":
        (x,) = ins
        gamma = layer.params["gamma"]
        c = gamma.shape[0]
        if x.shape[0] != c:
            raise DimensionError(f"BatchNorm over {c} channels got input {x.shape}")
        inner = x.numel // c
        data = T.kernels.batchnorm(
            x.data, c, inner, gamma.data, layer.params["beta"].data,
            layer.params["running_mean"].data, layer.params["running_var"].data,
            float(layer.attrs["epsilon"]),
        )
        return Tensor(x.shape, data)
    if kind == "Add":
        acc = ins[0]
        for t in ins[1:]:
            acc = T.elementwise_add(acc, t)
        return acc
    if kind == "Concat":
        return T.concat(ins, int(layer.attrs["axis"]))
    if kind == "Slice":
        return T.slice_(ins[0], int(layer.attrs["axis"]),
                        int(layer.attrs["start"]), int(layer.attrs["len"]))
    raise DimensionError(f"unknown kind {kind}")


def execute(
    g: Graph,
    inputs: dict[str, Tensor],
    node_hook: Callable[[Layer, Tensor], Tensor] | None = None,
) -> dict[str, Tensor]:
    """Forward pass in topological order; returns the graph output tensors.

    ``node_hook`` may replace any layer's output tensor before consumers see
    it (the fake-quantization simulator uses this). Execution is
    deterministic: same graph and inputs give bit-identical outputs.
    """
    for name, shape in g.inputs.items():
        if name not in inputs:
            raise ArgumentError(f"missing graph input '{name}'")
        if inputs[name].shape != shape:
            raise DimensionError(
                f"{name}: input shape {inputs[name].shape} does not match declared {shape}"
            )
    for name in inputs:
        if name not in g.inputs:
            raise ArgumentError(f"unknown graph input '{name}'")
    values: dict[str, Tensor] = dict(inputs)
    for layer in toposort(g):
        try:
            ins = [values[ref] for ref in layer.inputs]
        except KeyError as exc:
            raise ArgumentError(f"{layer.id}: missing input {exc.args[0]}") from None
        try:
            out = _eval_layer(layer, ins)
        except DimensionError as exc:
            msg = str(exc)
            raise DimensionError(msg if msg.startswith(layer.id + ":") else f"{layer.id}: {msg}") from None
        if node_hook is not None:
            out = node_hook(layer, out)
        values[layer.id] = out
    try:
        return {out: values[out] for out in g.outputs}
    except KeyError as exc:
        raise ArgumentError(f"graph output {exc.args[0]} was never produced") from None
