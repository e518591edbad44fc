"""Pure-Python kernels (fallback backend).

Contract shared with the compiled module ``trisect._ckernels``: operands are
float32 ``array('f')`` buffers in row-major order, arithmetic runs in float64
with a fixed ascending loop order, and results are cast to float32 on store.
Python floats are IEEE doubles, so both backends produce bit-identical
buffers on the same platform; tests assert this whenever the extension is
importable.

Rounding used by the quantizer is round-to-nearest with ties away from zero,
implemented without the ``floor(t + 0.5)`` shortcut (which misrounds values
one ulp below .5 ties) so it matches C ``llround`` exactly.
"""

from __future__ import annotations

import math
from array import array

# Magnitudes beyond this are clamped before integer rounding; keeps the
# compiled backend inside llround's exact range.
_ROUND_LIMIT = 4.5e15

_SQRT1_2 = 0.7071067811865476


def _round_away(t: float) -> int:
    if t >= 0.0:
        f = math.floor(t)
        return int(f) + 1 if t - f >= 0.5 else int(f)
    c = math.ceil(t)
    return int(c) - 1 if c - t >= 0.5 else int(c)


def matmul(a, b, m: int, k: int, n: int):
    out = array("f", bytes(4 * m * n))
    for i in range(m):
        arow = i * k
        for j in range(n):
            acc = 0.0
            for p in range(k):
                acc += a[arow + p] * b[p * n + j]
            out[i * n + j] = acc
    return out


def matvec_bias(w, x, bias, m: int, k: int):
    out = array("f", bytes(4 * m))
    for i in range(m):
        row = i * k
        acc = 0.0
        for p in range(k):
            acc += w[row + p] * x[p]
        acc += bias[i] if bias is not None else 0.0
        out[i] = acc
    return out


def conv2d(inp, ci: int, h: int, w: int, wgt, co: int, kh: int, kw: int,
           bias, stride: int, pad: int, oh: int, ow: int):
    out = array("f", bytes(4 * co * oh * ow))
    for oc in range(co):
        wbase = oc * ci * kh * kw
        for oy in range(oh):
            for ox in range(ow):
                acc = bias[oc] if bias is not None else 0.0
                for ic in range(ci):
                    ibase = ic * h * w
                    kbase = wbase + ic * kh * kw
                    for ky in range(kh):
                        iy = oy * stride + ky - pad
                        if iy < 0 or iy >= h:
                            continue
                        for kx in range(kw):
                            ix = ox * stride + kx - pad
                            if 0 <= ix < w:
                                acc += inp[ibase + iy * w + ix] * wgt[kbase + ky * kw + kx]
                out[(oc * oh + oy) * ow + ox] = acc
    return out


def add(a, b):
    out = array("f", bytes(4 * len(a)))
    for i in range(len(a)):
        out[i] = a[i] + b[i]
    return out


def relu(a):
    out = array("f", bytes(4 * len(a)))
    for i in range(len(a)):
        v = a[i]
        if v > 0.0:
            out[i] = v
    return out


def gelu(a):
    out = array("f", bytes(4 * len(a)))
    for i in range(len(a)):
        x = a[i]
        out[i] = 0.5 * x * (1.0 + math.erf(x * _SQRT1_2))
    return out


def batchnorm(x, c: int, inner: int, gamma, beta, mean, var, eps: float):
    out = array("f", bytes(4 * c * inner))
    for ch in range(c):
        s = gamma[ch] / math.sqrt(var[ch] + eps)
        mu = mean[ch]
        bt = beta[ch]
        base = ch * inner
        for i in range(base, base + inner):
            out[i] = (x[i] - mu) * s + bt
    return out


def fake_quant(a, scale: float, zp: int, qmin: int, qmax: int):
    out = array("f", bytes(4 * len(a)))
    for i in range(len(a)):
        t = scale * a[i]
        if t >= _ROUND_LIMIT:
            q = qmax
        elif t <= -_ROUND_LIMIT:
            q = qmin
        else:
            q = _round_away(t) + zp
            if q < qmin:
                q = qmin
            elif q > qmax:
                q = qmax
        out[i] = (q - zp) / scale
    return out


def quantize(a, scale: float, zp: int, qmin: int, qmax: int):
    out = array("q", bytes(8 * len(a)))
    for i in range(len(a)):
        t = scale * a[i]
        if t >= _ROUND_LIMIT:
            q = qmax
        elif t <= -_ROUND_LIMIT:
            q = qmin
        else:
            q = _round_away(t) + zp
            if q < qmin:
                q = qmin
            elif q > qmax:
                q = qmax
        out[i] = q
    return out


def dequantize(q, scale: float, zp: int):
    out = array("f", bytes(4 * len(q)))
    for i in range(len(q)):
        out[i] = (q[i] - zp) / scale
    return out


def min_max(a):
    lo = hi = a[0]
    for v in a:
        if v < lo:
            lo = v
        elif v > hi:
            hi = v
    return float(lo), float(hi)
