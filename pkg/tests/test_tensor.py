"""Tensor kernels against independent naive oracles, plus buffer-op invariants."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trisect.errors import ArgumentError, DimensionError
from trisect.rng import Rng
from trisect.tensor import (
    Tensor,
    concat,
    conv2d,
    elementwise_add,
    f32,
    gelu,
    int_range,
    matmul,
    relu,
    slice_,
)


def seeded_tensor(shape, seed, lo=-10.0, hi=10.0):
    rng = Rng(seed)
    n = 1
    for d in shape:
        n *= d
    return Tensor.from_flat(shape, [lo + rng.random() * (hi - lo) for _ in range(n)])


def matmul_oracle(a: Tensor, b: Tensor) -> list[list[float]]:
    m, k = a.shape
    _, n = b.shape
    rows_a = a.tolist()
    rows_b = b.tolist()
    out = [[0.0] * n for _ in range(m)]
    for i in range(m):
        for j in range(n):
            total = 0.0
            for p in range(k):
                total += rows_a[i][p] * rows_b[p][j]
            out[i][j] = total
    return out


def conv2d_oracle(inp: Tensor, weight: Tensor, bias, stride, padding):
    ci, h, w = inp.shape
    co, _, kh, kw = weight.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    x = inp.tolist()
    wt = weight.tolist()
    out = [[[0.0] * ow for _ in range(oh)] for _ in range(co)]
    for oc in range(co):
        for oy in range(oh):
            for ox in range(ow):
                total = bias.data[oc] if bias is not None else 0.0
                for ic in range(ci):
                    for ky in range(kh):
                        for kx in range(kw):
                            iy = oy * stride + ky - padding
                            ix = ox * stride + kx - padding
                            if 0 <= iy < h and 0 <= ix < w:
                                total += x[ic][iy][ix] * wt[oc][ic][ky][kx]
                out[oc][oy][ox] = total
    return out


class TestTensorType:
    def test_shape_data_mismatch_rejected(self):
        with pytest.raises(ArgumentError):
            Tensor.from_flat((2, 3), [1.0] * 5)

    def test_empty_and_nonpositive_shapes_rejected(self):
        with pytest.raises(ArgumentError):
            Tensor.from_flat((), [])
        with pytest.raises(ArgumentError):
            Tensor.from_flat((0,), [])

    def test_values_stored_as_float32(self):
        t = Tensor.from_flat((1,), [0.1])
        assert t.data[0] == f32(0.1)

    def test_int_range(self):
        assert int_range(2) == (-2, 1)
        assert int_range(4) == (-8, 7)
        assert int_range(8) == (-128, 127)

    def test_dtype_enum(self):
        from trisect.tensor import DType

        assert DType.FP32.value == "fp32" and DType.FP32.bits is None
        for dt in (DType.INT2, DType.INT4, DType.INT8):
            lo, hi = int_range(dt.bits)
            assert lo == -(2 ** (dt.bits - 1))
            assert hi == 2 ** (dt.bits - 1) - 1


class TestMatmul:
    def test_identity(self):
        eye = Tensor.from_nested([[1.0, 0.0], [0.0, 1.0]])
        a = Tensor.from_nested([[3.5, -2.0], [0.25, 9.0]])
        assert matmul(eye, a).tolist() == a.tolist()

    def test_hand_sum(self):
        a = Tensor.from_nested([[1, 2], [3, 4]])
        b = Tensor.from_nested([[1], [1]])
        assert matmul(a, b).tolist() == [[3.0], [7.0]]

    def test_against_triple_loop_oracle(self):
        a = seeded_tensor((3, 4), seed=101)
        b = seeded_tensor((4, 2), seed=202)
        got = matmul(a, b).tolist()
        want = matmul_oracle(a, b)
        for i in range(3):
            for j in range(2):
                assert got[i][j] == pytest.approx(want[i][j], rel=1e-6, abs=1e-12)

    def test_shape_mismatch_names_both_shapes(self):
        a = seeded_tensor((3, 4), seed=1)
        b = seeded_tensor((3, 2), seed=2)
        with pytest.raises(DimensionError, match=r"\(3, 4\).*\(3, 2\)"):
            matmul(a, b)


class TestConv2d:
    def test_identity_kernel(self):
        x = seeded_tensor((1, 4, 4), seed=7)
        k = Tensor.from_flat((1, 1, 1, 1), [1.0])
        assert conv2d(x, k).tolist() == x.tolist()

    def test_zero_weight_bias_only(self):
        x = seeded_tensor((2, 3, 3), seed=8)
        k = Tensor.zeros((1, 2, 2, 2))
        b = Tensor.from_flat((1,), [4.25])
        out = conv2d(x, k, b)
        assert all(v == 4.25 for v in out.data)

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
    def test_against_six_loop_oracle(self, stride, padding):
        x = seeded_tensor((2, 5, 5), seed=11)
        k = seeded_tensor((3, 2, 3, 3), seed=12)
        b = seeded_tensor((3,), seed=13)
        got = conv2d(x, k, b, stride=stride, padding=padding)
        want = conv2d_oracle(x, k, b, stride, padding)
        for oc in range(got.shape[0]):
            for oy in range(got.shape[1]):
                for ox in range(got.shape[2]):
                    assert got.tolist()[oc][oy][ox] == pytest.approx(
                        want[oc][oy][ox], rel=1e-6, abs=1e-12
                    )

    def test_kernel_too_large(self):
        x = seeded_tensor((1, 2, 2), seed=3)
        k = seeded_tensor((1, 1, 3, 3), seed=4)
        with pytest.raises(DimensionError):
            conv2d(x, k)
        # padding makes it fit
        assert conv2d(x, k, padding=1).shape == (1, 2, 2)


class TestElementwise:
    def test_relu(self):
        t = Tensor.from_flat((3,), [-1.0, 0.0, 2.0])
        assert relu(t).flat() == [0.0, 0.0, 2.0]

    def test_gelu_matches_erf_definition(self):
        t = seeded_tensor((17,), seed=5, lo=-4, hi=4)
        out = gelu(t)
        for x, y in zip(t.data, out.data):
            want = 0.5 * x * (1.0 + math.erf(x / math.sqrt(2.0)))
            assert y == pytest.approx(want, rel=1e-6, abs=1e-7)

    def test_add_identity(self):
        t = seeded_tensor((4, 3), seed=6)
        assert elementwise_add(t, Tensor.zeros(t.shape)).tolist() == t.tolist()

    def test_add_shape_mismatch(self):
        with pytest.raises(DimensionError):
            elementwise_add(Tensor.zeros((2,)), Tensor.zeros((3,)))

    @given(st.integers(0, 2**32), st.integers(2, 40))
    @settings(max_examples=50, deadline=None)
    def test_add_commutative_bit_exact(self, seed, n):
        a = seeded_tensor((n,), seed=seed)
        b = seeded_tensor((n,), seed=seed + 1)
        ab = elementwise_add(a, b)
        ba = elementwise_add(b, a)
        assert ab.data.tobytes() == ba.data.tobytes()


class TestSliceConcat:
    def test_round_trip_axis0(self):
        t = seeded_tensor((6, 3), seed=21)
        parts = [slice_(t, 0, 0, 2), slice_(t, 0, 2, 4)]
        assert concat(parts, 0).data.tobytes() == t.data.tobytes()

    def test_out_of_bounds(self):
        t = seeded_tensor((4,), seed=22)
        with pytest.raises(DimensionError):
            slice_(t, 0, 2, 3)
        with pytest.raises(DimensionError):
            slice_(t, 1, 0, 1)

    def test_concat_off_axis_mismatch(self):
        with pytest.raises(DimensionError):
            concat([Tensor.zeros((2, 3)), Tensor.zeros((2, 4))], 0)

    @given(
        seed=st.integers(0, 2**32),
        rank=st.integers(1, 3),
        data=st.data(),
    )
    @settings(max_examples=60, deadline=None)
    def test_slice_concat_round_trip_property(self, seed, rank, data):
        shape = tuple(data.draw(st.integers(1, 6)) for _ in range(rank))
        axis = data.draw(st.integers(0, rank - 1))
        t = seeded_tensor(shape, seed=seed)
        dim = shape[axis]
        n_cuts = data.draw(st.integers(0, dim - 1))
        cuts = sorted(data.draw(
            st.lists(st.integers(1, dim - 1), min_size=n_cuts, max_size=n_cuts, unique=True)
        )) if dim > 1 else []
        bounds = [0] + cuts + [dim]
        parts = [
            slice_(t, axis, bounds[i], bounds[i + 1] - bounds[i])
            for i in range(len(bounds) - 1)
        ]
        assert concat(parts, axis).data.tobytes() == t.data.tobytes()


class TestBackends:
    def test_backend_parity_bit_exact(self):
        ck = pytest.importorskip("trisect._ckernels")
        from trisect import _pykernels as pk

        rng = Rng(314)
        from array import array

        a = array("f", [rng.normal() * 5 for _ in range(6 * 7)])
        b = array("f", [rng.normal() * 5 for _ in range(7 * 4)])
        assert pk.matmul(a, b, 6, 7, 4).tobytes() == ck.matmul(a, b, 6, 7, 4).tobytes()
        assert pk.gelu(a).tobytes() == ck.gelu(a).tobytes()
        assert pk.relu(a).tobytes() == ck.relu(a).tobytes()
        assert (pk.fake_quant(a, 12.75, -3, -8, 7).tobytes()
                == ck.fake_quant(a, 12.75, -3, -8, 7).tobytes())
        assert list(pk.quantize(a, 12.75, -3, -8, 7)) == list(ck.quantize(a, 12.75, -3, -8, 7))
        img = array("f", [rng.normal() for _ in range(3 * 6 * 6)])
        kern = array("f", [rng.normal() for _ in range(2 * 3 * 3 * 3)])
        bias = array("f", [rng.normal(), rng.normal()])
        assert (pk.conv2d(img, 3, 6, 6, kern, 2, 3, 3, bias, 1, 1, 6, 6).tobytes()
                == ck.conv2d(img, 3, 6, 6, kern, 2, 3, 3, bias, 1, 1, 6, 6).tobytes())

    def test_round_away_tie_handling(self):
        from trisect._pykernels import _round_away

        assert _round_away(2.5) == 3
        assert _round_away(-2.5) == -3
        assert _round_away(0.5) == 1
        assert _round_away(-0.5) == -1
        # one ulp below the tie must round down, not up
        assert _round_away(0.49999999999999994) == 0
        assert _round_away(-0.49999999999999994) == 0
