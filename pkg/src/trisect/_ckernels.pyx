# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled kernels (accelerated backend).

Bit-compatible with ``trisect._pykernels``: float32 buffers, float64
accumulation in the same ascending loop order, float32 stores. Keep the two
modules in lockstep; the test suite diffs them byte-for-byte.
"""

import array

from cpython cimport array
from libc.math cimport erf, llround, sqrt

cdef double _ROUND_LIMIT = 4.5e15
cdef double _SQRT1_2 = 0.7071067811865476

cdef array.array _F32 = array.array('f')
cdef array.array _I64 = array.array('q')


def matmul(float[::1] a, float[::1] b, Py_ssize_t m, Py_ssize_t k, Py_ssize_t n):
    cdef array.array outa = array.clone(_F32, m * n, zero=True)
    cdef float[::1] out = outa
    cdef Py_ssize_t i, j, p
    cdef double acc
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for p in range(k):
                acc += (<double> a[i * k + p]) * (<double> b[p * n + j])
            out[i * n + j] = <float> acc
    return outa


def matvec_bias(float[::1] w, float[::1] x, bias, Py_ssize_t m, Py_ssize_t k):
    cdef array.array outa = array.clone(_F32, m, zero=True)
    cdef float[::1] out = outa
    cdef float[::1] bv
    cdef bint has_bias = bias is not None
    if has_bias:
        bv = bias
    cdef Py_ssize_t i, p
    cdef double acc
    for i in range(m):
        acc = 0.0
        for p in range(k):
            acc += (<double> w[i * k + p]) * (<double> x[p])
        if has_bias:
            acc += <double> bv[i]
        out[i] = <float> acc
    return outa


def conv2d(float[::1] inp, Py_ssize_t ci, Py_ssize_t h, Py_ssize_t w,
           float[::1] wgt, Py_ssize_t co, Py_ssize_t kh, Py_ssize_t kw,
           bias, Py_ssize_t stride, Py_ssize_t pad, Py_ssize_t oh, Py_ssize_t ow):
    cdef array.array outa = array.clone(_F32, co * oh * ow, zero=True)
    cdef float[::1] out = outa
    cdef float[::1] bv
    cdef bint has_bias = bias is not None
    if has_bias:
        bv = bias
    cdef Py_ssize_t oc, oy, ox, ic, ky, kx, iy, ix, wbase, ibase, kbase
    cdef double acc
    for oc in range(co):
        wbase = oc * ci * kh * kw
        for oy in range(oh):
            for ox in range(ow):
                acc = (<double> bv[oc]) if has_bias else 0.0
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
                                acc += (<double> inp[ibase + iy * w + ix]) * (<double> wgt[kbase + ky * kw + kx])
                out[(oc * oh + oy) * ow + ox] = <float> acc
    return outa


def add(float[::1] a, float[::1] b):
    cdef Py_ssize_t n = a.shape[0]
    cdef array.array outa = array.clone(_F32, n, zero=True)
    cdef float[::1] out = outa
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = <float> ((<double> a[i]) + (<double> b[i]))
    return outa


def relu(float[::1] a):
    cdef Py_ssize_t n = a.shape[0]
    cdef array.array outa = array.clone(_F32, n, zero=True)
    cdef float[::1] out = outa
    cdef Py_ssize_t i
    cdef float v
    for i in range(n):
        v = a[i]
        if v > 0.0:
            out[i] = v
    return outa


def gelu(float[::1] a):
    cdef Py_ssize_t n = a.shape[0]
    cdef array.array outa = array.clone(_F32, n, zero=True)
    cdef float[::1] out = outa
    cdef Py_ssize_t i
    cdef double x
    for i in range(n):
        x = <double> a[i]
        out[i] = <float> (0.5 * x * (1.0 + erf(x * _SQRT1_2)))
    return outa


def batchnorm(float[::1] x, Py_ssize_t c, Py_ssize_t inner,
              float[::1] gamma, float[::1] beta, float[::1] mean, float[::1] var,
              double eps):
    cdef array.array outa = array.clone(_F32, c * inner, zero=True)
    cdef float[::1] out = outa
    cdef Py_ssize_t ch, i, base
    cdef double s, mu, bt
    for ch in range(c):
        s = (<double> gamma[ch]) / sqrt((<double> var[ch]) + eps)
        mu = <double> mean[ch]
        bt = <double> beta[ch]
        base = ch * inner
        for i in range(base, base + inner):
            out[i] = <float> (((<double> x[i]) - mu) * s + bt)
    return outa


def fake_quant(float[::1] a, double scale, long long zp, long long qmin, long long qmax):
    cdef Py_ssize_t n = a.shape[0]
    cdef array.array outa = array.clone(_F32, n, zero=True)
    cdef float[::1] out = outa
    cdef Py_ssize_t i
    cdef double t
    cdef long long q
    for i in range(n):
        t = scale * (<double> a[i])
        if t >= _ROUND_LIMIT:
            q = qmax
        elif t <= -_ROUND_LIMIT:
            q = qmin
        else:
            q = llround(t) + zp
            if q < qmin:
                q = qmin
            elif q > qmax:
                q = qmax
        out[i] = <float> ((<double> (q - zp)) / scale)
    return outa


def quantize(float[::1] a, double scale, long long zp, long long qmin, long long qmax):
    cdef Py_ssize_t n = a.shape[0]
    cdef array.array outa = array.clone(_I64, n, zero=True)
    cdef long long[::1] out = outa
    cdef Py_ssize_t i
    cdef double t
    cdef long long q
    for i in range(n):
        t = scale * (<double> a[i])
        if t >= _ROUND_LIMIT:
            q = qmax
        elif t <= -_ROUND_LIMIT:
            q = qmin
        else:
            q = llround(t) + zp
            if q < qmin:
                q = qmin
            elif q > qmax:
                q = qmax
        out[i] = q
    return outa


def dequantize(long long[::1] q, double scale, long long zp):
    cdef Py_ssize_t n = q.shape[0]
    cdef array.array outa = array.clone(_F32, n, zero=True)
    cdef float[::1] out = outa
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = <float> ((<double> (q[i] - zp)) / scale)
    return outa


def min_max(float[::1] a):
    cdef Py_ssize_t n = a.shape[0]
    cdef float lo = a[0]
    cdef float hi = a[0]
    cdef Py_ssize_t i
    cdef float v
    for i in range(n):
        v = a[i]
        if v < lo:
            lo = v
        elif v > hi:
            hi = v
    return float(lo), float(hi)
