"""Randomized byte-level parity sweep between the two kernel backends."""

from array import array

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trisect.rng import Rng

ck = pytest.importorskip("trisect._ckernels")
from trisect import _pykernels as pk  # noqa: E402


def buf(rng: Rng, n: int, scale: float = 4.0):
    return array("f", [rng.normal() * scale for _ in range(n)])


@given(seed=st.integers(0, 2**32), m=st.integers(1, 8), k=st.integers(1, 8),
       n=st.integers(1, 8))
@settings(max_examples=60, deadline=None)
def test_matmul_parity(seed, m, k, n):
    rng = Rng(seed)
    a, b = buf(rng, m * k), buf(rng, k * n)
    assert pk.matmul(a, b, m, k, n).tobytes() == ck.matmul(a, b, m, k, n).tobytes()


@given(seed=st.integers(0, 2**32), has_bias=st.booleans())
@settings(max_examples=40, deadline=None)
def test_matvec_parity(seed, has_bias):
    rng = Rng(seed)
    m, k = 1 + seed % 7, 1 + (seed // 7) % 9
    w, x = buf(rng, m * k), buf(rng, k)
    bias = buf(rng, m) if has_bias else None
    assert (pk.matvec_bias(w, x, bias, m, k).tobytes()
            == ck.matvec_bias(w, x, bias, m, k).tobytes())


@given(seed=st.integers(0, 2**32), stride=st.integers(1, 2), pad=st.integers(0, 1),
       has_bias=st.booleans())
@settings(max_examples=40, deadline=None)
def test_conv2d_parity(seed, stride, pad, has_bias):
    rng = Rng(seed)
    ci, h, w, co, kh, kw = 2, 5, 6, 3, 3, 2
    inp = buf(rng, ci * h * w)
    wgt = buf(rng, co * ci * kh * kw)
    bias = buf(rng, co) if has_bias else None
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    assert (pk.conv2d(inp, ci, h, w, wgt, co, kh, kw, bias, stride, pad, oh, ow).tobytes()
            == ck.conv2d(inp, ci, h, w, wgt, co, kh, kw, bias, stride, pad, oh, ow).tobytes())


@given(seed=st.integers(0, 2**32), n=st.integers(1, 64))
@settings(max_examples=60, deadline=None)
def test_elementwise_parity(seed, n):
    rng = Rng(seed)
    a, b = buf(rng, n, 8.0), buf(rng, n, 8.0)
    assert pk.add(a, b).tobytes() == ck.add(a, b).tobytes()
    assert pk.relu(a).tobytes() == ck.relu(a).tobytes()
    assert pk.gelu(a).tobytes() == ck.gelu(a).tobytes()
    assert pk.min_max(a) == ck.min_max(a)


@given(seed=st.integers(0, 2**32), bits=st.sampled_from([2, 4, 8]))
@settings(max_examples=60, deadline=None)
def test_quantize_parity(seed, bits):
    rng = Rng(seed)
    n = 48
    # mix ordinary values with huge magnitudes to cross the clamp guards
    a = array("f", [rng.normal() * (1e30 if i % 11 == 0 else 6.0) for i in range(n)])
    qmin, qmax = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    scale = abs(rng.normal()) * 40 + 1e-3
    zp = int(rng.normal() * 3)
    assert (pk.quantize(a, scale, zp, qmin, qmax).tobytes()
            == ck.quantize(a, scale, zp, qmin, qmax).tobytes())
    assert (pk.fake_quant(a, scale, zp, qmin, qmax).tobytes()
            == ck.fake_quant(a, scale, zp, qmin, qmax).tobytes())
    q = pk.quantize(a, scale, zp, qmin, qmax)
    assert pk.dequantize(q, scale, zp).tobytes() == ck.dequantize(q, scale, zp).tobytes()


@given(seed=st.integers(0, 2**32), c=st.integers(1, 5), inner=st.integers(1, 9))
@settings(max_examples=40, deadline=None)
def test_batchnorm_parity(seed, c, inner):
    rng = Rng(seed)
    x = buf(rng, c * inner)
    gamma, beta, mean = buf(rng, c), buf(rng, c), buf(rng, c)
    var = array("f", [abs(rng.normal()) + 0.2 for _ in range(c)])
    eps = 1e-5
    assert (pk.batchnorm(x, c, inner, gamma, beta, mean, var, eps).tobytes()
            == ck.batchnorm(x, c, inner, gamma, beta, mean, var, eps).tobytes())
