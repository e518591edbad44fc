"""Dense float32 tensors and the numeric kernels the executor uses.

Tensors are immutable value objects: construct once, never mutate the buffer.
All kernels are pure functions returning fresh tensors, so tensors and the
ops are safe to share across threads. Heavy loops dispatch to the selected
kernel backend (compiled extension or pure Python, see ``trisect._backend``).
"""

from __future__ import annotations

import enum
import sys
from array import array
from typing import Iterable, Sequence

from trisect._backend import BACKEND, kernels
from trisect.errors import ArgumentError, DimensionError

__all__ = [
    "BACKEND",
    "DType",
    "Tensor",
    "concat",
    "conv2d",
    "elementwise_add",
    "gelu",
    "int_range",
    "matmul",
    "relu",
    "slice_",
]


class DType(enum.Enum):
    FP32 = "fp32"
    INT2 = "int2"
    INT4 = "int4"
    INT8 = "int8"

    @property
    def bits(self) -> int | None:
        return {"int2": 2, "int4": 4, "int8": 8}.get(self.value)


def int_range(bits: int) -> tuple[int, int]:
    """Signed integer range for a bit-width: [-2^(b-1), 2^(b-1)-1]."""
    if bits < 2:
        raise ArgumentError(f"bit-width must be >= 2, got {bits}")
    half = 1 << (bits - 1)
    return -half, half - 1


def _prod(dims: Sequence[int]) -> int:
    n = 1
    for d in dims:
        n *= d
    return n


def f32(value: float) -> float:
    """Round a Python float to the nearest float32 value."""
    return array("f", (value,))[0]


class Tensor:
    """Rank-N float32 array, row-major, immutable by convention."""

    __slots__ = ("shape", "data")

    def __init__(self, shape: Sequence[int], data: array):
        shape = tuple(int(d) for d in shape)
        if not shape or any(d < 1 for d in shape):
            raise ArgumentError(f"invalid tensor shape {shape}")
        if data.typecode != "f":
            raise ArgumentError("tensor data must be a float32 array('f')")
        if len(data) != _prod(shape):
            raise ArgumentError(
                f"data length {len(data)} does not match shape {shape}"
            )
        self.shape = shape
        self.data = data

    @classmethod
    def from_flat(cls, shape: Sequence[int], values: Iterable[float]) -> "Tensor":
        return cls(shape, array("f", values))

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> "Tensor":
        return cls(shape, array("f", bytes(4 * _prod(shape))))

    @classmethod
    def full(cls, shape: Sequence[int], value: float) -> "Tensor":
        n = _prod(shape)
        return cls(shape, array("f", (value,) * n))

    @classmethod
    def from_nested(cls, nested) -> "Tensor":
        """Build from nested lists, inferring the shape."""
        shape = []
        probe = nested
        while isinstance(probe, (list, tuple)):
            shape.append(len(probe))
            probe = probe[0]
        flat: list[float] = []

        def walk(node, depth):
            if depth == len(shape):
                flat.append(float(node))
                return
            if len(node) != shape[depth]:
                raise ArgumentError("ragged nested list cannot form a tensor")
            for child in node:
                walk(child, depth + 1)

        walk(nested, 0)
        return cls.from_flat(shape, flat)

    @property
    def numel(self) -> int:
        return len(self.data)

    def flat(self) -> list[float]:
        return list(self.data)

    def tolist(self):
        """Nested-list view (row-major)."""

        def build(dim: int, offset: int):
            if dim == len(self.shape) - 1:
                step = self.shape[dim]
                return list(self.data[offset:offset + step])
            inner = _prod(self.shape[dim + 1:])
            return [build(dim + 1, offset + i * inner) for i in range(self.shape[dim])]

        return build(0, 0)

    def tobytes(self) -> bytes:
        """Little-endian raw bytes regardless of platform."""
        if sys.byteorder == "little":
            return self.data.tobytes()
        swapped = array("f", self.data)
        swapped.byteswap()
        return swapped.tobytes()

    @classmethod
    def from_bytes(cls, shape: Sequence[int], raw: bytes) -> "Tensor":
        data = array("f")
        data.frombytes(raw)
        if sys.byteorder != "little":
            data.byteswap()
        return cls(shape, data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a 2-D [m,k] by a 2-D [k,n] tensor."""
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise DimensionError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    m, k = a.shape
    k2, n = b.shape
    if k != k2:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    return Tensor((m, n), kernels.matmul(a.data, b.data, m, k, n))


def conv2d(inp: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation over a [C,H,W] input with a [Co,Ci,kh,kw] kernel."""
    if len(inp.shape) != 3:
        raise DimensionError(f"conv2d input must be [C,H,W], got {inp.shape}")
    if len(weight.shape) != 4:
        raise DimensionError(f"conv2d weight must be [Co,Ci,kh,kw], got {weight.shape}")
    if stride < 1:
        raise ArgumentError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ArgumentError(f"padding must be >= 0, got {padding}")
    ci, h, w = inp.shape
    co, ci2, kh, kw = weight.shape
    if ci != ci2:
        raise DimensionError(f"conv2d channel mismatch: input {inp.shape}, weight {weight.shape}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise DimensionError(
            f"kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}"
        )
    if bias is not None and bias.shape != (co,):
        raise DimensionError(f"conv2d bias must be [{co}], got {bias.shape}")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    data = kernels.conv2d(inp.data, ci, h, w, weight.data, co, kh, kw,
                          None if bias is None else bias.data, stride, padding, oh, ow)
    return Tensor((co, oh, ow), data)


def elementwise_add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"elementwise_add shapes differ: {a.shape} vs {b.shape}")
    return Tensor(a.shape, kernels.add(a.data, b.data))


def relu(t: Tensor) -> Tensor:
    return Tensor(t.shape, kernels.relu(t.data))


def gelu(t: Tensor) -> Tensor:
    """Exact Gaussian-CDF GELU: x * 0.5 * (1 + erf(x / sqrt(2))).

    The erf form (not the tanh approximation) keeps rewritten graphs
    numerically tight against their originals.
    """
    return Tensor(t.shape, kernels.gelu(t.data))


def _check_axis(t: Tensor, axis: int) -> None:
    if not 0 <= axis < len(t.shape):
        raise DimensionError(f"axis {axis} out of range for shape {t.shape}")


def slice_(t: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slab of ``length`` indices along ``axis`` starting at ``start``."""
    _check_axis(t, axis)
    dim = t.shape[axis]
    if length < 1 or start < 0 or start + length > dim:
        raise DimensionError(
            f"slice [{start}:{start + length}) out of bounds for axis {axis} of {t.shape}"
        )
    inner = _prod(t.shape[axis + 1:])
    outer = _prod(t.shape[:axis])
    out = array("f")
    step = dim * inner
    for o in range(outer):
        base = o * step + start * inner
        out.extend(t.data[base:base + length * inner])
    shape = list(t.shape)
    shape[axis] = length
    return Tensor(shape, out)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    """Concatenate along ``axis``; other dimensions must match exactly."""
    if not parts:
        raise ArgumentError("concat needs at least one tensor")
    first = parts[0]
    _check_axis(first, axis)
    rank = len(first.shape)
    for p in parts[1:]:
        if len(p.shape) != rank:
            raise DimensionError(f"concat rank mismatch: {first.shape} vs {p.shape}")
        for ax in range(rank):
            if ax != axis and p.shape[ax] != first.shape[ax]:
                raise DimensionError(f"concat shape mismatch off axis {axis}: "
                                     f"{first.shape} vs {p.shape}")
    inner = _prod(first.shape[axis + 1:])
    outer = _prod(first.shape[:axis])
    out = array("f")
    for o in range(outer):
        for p in parts:
            dim = p.shape[axis]
            base = o * dim * inner
            out.extend(p.data[base:base + dim * inner])
    shape = list(first.shape)
    shape[axis] = sum(p.shape[axis] for p in parts)
    return Tensor(shape, out)
