"""Quantizer math: worked examples, formula checks, and property invariants."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trisect.errors import ArgumentError, CalibrationError
from trisect.ir import Graph, Layer, execute
from trisect.quant import (
    CalibRange,
    QuantConfig,
    compute_qparams,
    calibrate,
    dequantize,
    fake_quant_execute,
    fake_quantize,
    quantize,
)
from trisect.rng import Rng
from trisect.tensor import Tensor, f32


class TestComputeQparams:
    def test_int8_unit_range(self):
        qp = compute_qparams(CalibRange(-1.0, 1.0), -128, 127, symmetric=False)
        assert qp.scale == 127.5
        assert qp.zero_point == 0
        assert not qp.degenerate

    def test_thousand_range_example(self):
        qp = compute_qparams(CalibRange(-1000.0, 1000.0), -10, 10, symmetric=False)
        assert qp.scale == pytest.approx(0.01, rel=1e-6)
        assert qp.zero_point == 0

    def test_symmetric_widens_range(self):
        qp = compute_qparams(CalibRange(-2.0, 0.5), -128, 127, symmetric=True)
        assert qp.scale == pytest.approx(255.0 / 4.0, rel=1e-6)
        assert qp.zero_point == 0

    def test_degenerate_constant_range(self):
        qp = compute_qparams(CalibRange(3.0, 3.0), -8, 7, symmetric=False)
        assert qp.degenerate
        assert qp.scale == 1.0
        assert qp.zero_point == -8 - 3

    def test_bad_range_rejected(self):
        with pytest.raises(ArgumentError):
            compute_qparams(CalibRange(1.0, -1.0), -8, 7, symmetric=False)
        with pytest.raises(ArgumentError):
            compute_qparams(CalibRange(-1.0, 1.0), 7, -8, symmetric=False)


class TestQuantizeWorkedExamples:
    def test_clean_five_values(self):
        qp = compute_qparams(CalibRange(-1000.0, 1000.0), -10, 10, symmetric=False)
        x = Tensor.from_flat((5,), [-1000.0, -500.0, 0.0, 500.0, 1000.0])
        assert quantize(x, qp).tolist() == [-10, -5, 0, 5, 10]

    def test_outlier_collapses_resolution(self):
        qp = compute_qparams(CalibRange(-1000.0, 1e30), -10, 10, symmetric=False)
        x = Tensor.from_flat((5,), [-1000.0, -500.0, 0.0, 500.0, 1e30])
        assert quantize(x, qp).tolist() == [-10, -10, -10, -10, 10]

    def test_range_endpoints_map_to_extremes(self):
        qp = compute_qparams(CalibRange(-3.7, 11.1), -8, 7, symmetric=False)
        x = Tensor.from_flat((2,), [-3.7, 11.1])
        assert quantize(x, qp).tolist() == [-8, 7]

    def test_dequantize_round_trip_on_grid(self):
        qp = compute_qparams(CalibRange(-1000.0, 1000.0), -10, 10, symmetric=False)
        x = Tensor.from_flat((5,), [-1000.0, -500.0, 0.0, 500.0, 1000.0])
        back = dequantize(quantize(x, qp), qp)
        assert back.flat() == pytest.approx([-1000.0, -500.0, 0.0, 500.0, 1000.0], rel=1e-6)

    def test_zero_point_dequantizes_to_zero(self):
        qp = compute_qparams(CalibRange(-2.0, 6.0), -128, 127, symmetric=False)
        from array import array
        from trisect.quant import IntTensor
        q = IntTensor((1,), array("q", [qp.zero_point]))
        assert dequantize(q, qp).flat() == [0.0]


class TestCalibrate:
    def test_minmax(self):
        r = calibrate([Tensor.from_flat((2,), [-3.0, 7.0])])
        assert (r.beta, r.alpha) == (-3.0, 7.0)

    def test_minmax_across_stream(self):
        r = calibrate([Tensor.from_flat((1,), [5.0]), Tensor.from_flat((1,), [-9.0])])
        assert (r.beta, r.alpha) == (-9.0, 5.0)

    def test_percentile_100_equals_minmax(self):
        rng = Rng(40)
        tensors = [Tensor.from_flat((64,), [rng.normal() for _ in range(64)])
                   for _ in range(4)]
        a = calibrate(tensors, "minmax")
        b = calibrate(tensors, "percentile", 100.0)
        assert (a.beta, a.alpha) == (b.beta, b.alpha)

    def test_percentile_99_uniform_1_to_1000(self):
        t = Tensor.from_flat((1000,), range(1, 1001))
        r = calibrate([t], "percentile", 99.0)
        assert r.alpha == pytest.approx(990.01, abs=1e-3)
        assert r.beta == pytest.approx(10.99, abs=1e-3)

    def test_empty_stream_is_error(self):
        with pytest.raises(CalibrationError):
            calibrate([])
        with pytest.raises(CalibrationError):
            calibrate([], "percentile", 99.0)

    def test_bad_percentile_rejected(self):
        t = Tensor.from_flat((2,), [0.0, 1.0])
        with pytest.raises(ArgumentError):
            calibrate([t], "percentile", 50.0)
        with pytest.raises(ArgumentError):
            calibrate([t], "percentile", 101.0)


class TestQuantConfig:
    def test_bit_widths(self):
        assert QuantConfig(bits=2).int_range() == (-2, 1)
        assert QuantConfig(bits=4).int_range() == (-8, 7)
        assert QuantConfig(bits=8).int_range() == (-128, 127)

    def test_explicit_range(self):
        assert QuantConfig(bits=None, qmin=-10, qmax=10).int_range() == (-10, 10)

    def test_unsupported_bits_rejected(self):
        with pytest.raises(ArgumentError):
            QuantConfig(bits=3)

    def test_bad_explicit_range_rejected(self):
        with pytest.raises(ArgumentError):
            QuantConfig(bits=None, qmin=5, qmax=5)


def random_qparams(rng: Rng):
    qmin, qmax = (-2, 1) if rng.random() < 0.3 else ((-8, 7) if rng.random() < 0.5 else (-128, 127))
    center = rng.normal() * 10
    half = abs(rng.normal()) * 10 + 0.1
    sym = rng.random() < 0.5
    return compute_qparams(CalibRange(center - half, center + half), qmin, qmax, sym), center, half


class TestProperties:
    @given(seed=st.integers(0, 2**32))
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_x(self, seed):
        rng = Rng(seed)
        qp, center, half = random_qparams(rng)
        xs = sorted(f32(center + (rng.random() * 4 - 2) * half) for _ in range(16))
        codes = quantize(Tensor.from_flat((16,), xs), qp).tolist()
        assert all(codes[i] <= codes[i + 1] for i in range(15))

    @given(seed=st.integers(0, 2**32))
    @settings(max_examples=100, deadline=None)
    def test_half_step_round_trip_bound(self, seed):
        rng = Rng(seed)
        qp, center, half = random_qparams(rng)
        beta, alpha = center - half, center + half
        if qp.symmetric:
            bound = max(abs(alpha), abs(beta))
            beta, alpha = -bound, bound
        xs = [f32(beta + rng.random() * (alpha - beta)) for _ in range(32)]
        t = Tensor.from_flat((32,), xs)
        back = fake_quantize(t, qp)
        ulp = max(abs(alpha), abs(beta), 1e-30) * 2.0 ** -23
        limit = 0.5 / qp.scale + ulp
        for x, y in zip(t.data, back.data):
            assert abs(y - x) <= limit * (1 + 1e-6)

    @given(seed=st.integers(0, 2**32))
    @settings(max_examples=100, deadline=None)
    def test_symmetric_zero_point_is_zero(self, seed):
        rng = Rng(seed)
        lo = rng.normal() * 100
        hi = lo + abs(rng.normal()) * 100
        qp = compute_qparams(CalibRange(lo, hi), -128, 127, symmetric=True)
        assert qp.zero_point == 0

    def test_scale_strictly_grows_as_range_shrinks(self):
        widths = [1000.0, 100.0, 10.0, 1.0, 0.125]
        scales = [compute_qparams(CalibRange(-w / 2, w / 2), -8, 7, False).scale
                  for w in widths]
        assert all(scales[i] < scales[i + 1] for i in range(len(scales) - 1))

    def test_mse_non_increasing_as_range_tightens(self):
        rng = Rng(77)
        vals = [f32(rng.normal()) for _ in range(256)]
        true_lo, true_hi = min(vals), max(vals)
        t = Tensor.from_flat((256,), vals)
        last = None
        for widen in (8.0, 4.0, 2.0, 1.0):
            mid = (true_lo + true_hi) / 2
            half = (true_hi - true_lo) / 2 * widen
            qp = compute_qparams(CalibRange(mid - half, mid + half), -8, 7, False)
            back = fake_quantize(t, qp)
            mse = sum((a - b) ** 2 for a, b in zip(t.data, back.data)) / 256
            if last is not None:
                assert mse <= last
            last = mse

    def test_bitwidth_mse_monotone(self):
        rng = Rng(123)
        vals = [f32(rng.normal() * 3) for _ in range(512)]
        t = Tensor.from_flat((512,), vals)
        crange = CalibRange(min(vals), max(vals))
        mses = []
        for bits in (2, 4, 8):
            qmin, qmax = QuantConfig(bits=bits).int_range()
            qp = compute_qparams(crange, qmin, qmax, False)
            back = fake_quantize(t, qp)
            mses.append(sum((a - b) ** 2 for a, b in zip(t.data, back.data)) / len(vals))
        assert mses[0] >= mses[1] >= mses[2]


def tiny_model(weights, bias=None):
    params = {"weight": Tensor.from_nested(weights)}
    if bias is not None:
        params["bias"] = Tensor.from_flat((len(weights),), bias)
    return Graph(
        layers=[Layer("fc", "Linear", ("x",), params=params)],
        inputs={"x": (len(weights[0]),)},
        outputs=["fc"],
    )


class TestFakeQuantExecute:
    def test_grid_fixed_point_weights(self):
        # weights on the 8-bit grid of their own min-max range reproduce exactly
        qp = compute_qparams(CalibRange(-1.0, 1.0), -128, 127, symmetric=False)
        grid = [(q - qp.zero_point) / qp.scale for q in (-128, -64, 0, 64, 127)]
        g = tiny_model([grid[:4], grid[1:]])
        x = [{"x": Tensor.from_flat((4,), [0.25, -1.0, 0.5, 2.0])}]
        cfg = QuantConfig(bits=8, weights_only=True)
        fp32 = execute(g, x[0])["fc"]
        out, _ = fake_quant_execute(g, cfg, None, x)
        assert out[0]["fc"].flat() == pytest.approx(fp32.flat(), rel=1e-6, abs=1e-7)

    def test_weights_only_ignores_calibration(self):
        g = tiny_model([[0.53, -1.7], [2.2, 0.01]], [0.4, -0.2])
        x = [{"x": Tensor.from_flat((2,), [1.0, -2.0])}]
        cfg = QuantConfig(bits=4, weights_only=True)
        with_calib, _ = fake_quant_execute(g, cfg, x, x)
        without_calib, _ = fake_quant_execute(g, cfg, None, x)
        assert with_calib[0]["fc"].data.tobytes() == without_calib[0]["fc"].data.tobytes()

    def test_activation_quant_requires_calibration(self):
        g = tiny_model([[1.0, 2.0], [3.0, -4.0]])
        x = [{"x": Tensor.from_flat((2,), [1.0, 1.0])}]
        cfg = QuantConfig(bits=8, weights_only=False)
        with pytest.raises(CalibrationError):
            fake_quant_execute(g, cfg, [], x)

    def test_activation_quant_changes_outputs(self):
        g = tiny_model([[0.53, -1.7], [2.2, 0.01]])
        x = [{"x": Tensor.from_flat((2,), [0.3, -0.9])}]
        full, rep_full = fake_quant_execute(g, QuantConfig(bits=2), x, x)
        wonly, rep_w = fake_quant_execute(g, QuantConfig(bits=2, weights_only=True), x, x)
        assert any(e.role == "activation" for e in rep_full.entries)
        assert all(e.role != "activation" for e in rep_w.entries)
        assert full[0]["fc"].flat() != wonly[0]["fc"].flat()

    def test_degenerate_range_flagged_in_report(self):
        g = tiny_model([[5.0, 5.0], [5.0, 5.0]])
        x = [{"x": Tensor.from_flat((2,), [1.0, 1.0])}]
        _, report = fake_quant_execute(g, QuantConfig(bits=8, weights_only=True), None, x)
        assert "fc.weight" in report.degenerate_names()

    def test_percentile_activation_calibration(self):
        g = tiny_model([[1.0, -0.5], [0.25, 2.0]])
        rng = Rng(88)
        calib = [{"x": Tensor.from_flat((2,), [rng.normal(), rng.normal()])}
                 for _ in range(50)]
        cfg99 = QuantConfig(bits=8, activation_calibration="percentile", percentile=99.0)
        cfg100 = QuantConfig(bits=8, activation_calibration="percentile", percentile=100.0)
        cfgmm = QuantConfig(bits=8, activation_calibration="minmax")
        _, rep99 = fake_quant_execute(g, cfg99, calib, calib[:1])
        _, rep100 = fake_quant_execute(g, cfg100, calib, calib[:1])
        _, repmm = fake_quant_execute(g, cfgmm, calib, calib[:1])
        act99 = next(e for e in rep99.entries if e.role == "activation")
        act100 = next(e for e in rep100.entries if e.role == "activation")
        actmm = next(e for e in repmm.entries if e.role == "activation")
        # percentile(100) matches min-max; percentile(99) clips both tails
        assert (act100.beta, act100.alpha) == (actmm.beta, actmm.alpha)
        assert act99.beta >= actmm.beta and act99.alpha <= actmm.alpha
        assert act99.alpha - act99.beta < actmm.alpha - actmm.beta

    def test_reentrant_across_threads(self):
        from concurrent.futures import ThreadPoolExecutor

        g = tiny_model([[0.53, -1.7], [2.2, 0.01]], [0.4, -0.2])
        rng = Rng(4)
        samples = [{"x": Tensor.from_flat((2,), [rng.normal(), rng.normal()])}
                   for _ in range(16)]
        cfg = QuantConfig(bits=4)

        def run(_):
            outs, _rep = fake_quant_execute(g, cfg, samples, samples)
            return [o["fc"].data.tobytes() for o in outs]

        want = run(0)
        with ThreadPoolExecutor(max_workers=4) as pool:
            for got in pool.map(run, range(8)):
                assert got == want

    def test_outlier_example_split_beats_baseline(self):
        # INT2 on an outlier-style weight matrix: error after the split
        # rewrite is strictly smaller than the baseline error
        from trisect.transform import TransformConfig, apply_transforms

        g = tiny_model([[-5.0, 0.1], [0.2, 9.0]], [-4.0, 10.0])
        xs = [{"x": Tensor.from_flat((2,), [0.5 * i - 1.5, 0.25 * i])} for i in range(8)]
        cfg = QuantConfig(bits=2, weights_only=True)
        ref = [execute(g, x)["fc"] for x in xs]
        base, _ = fake_quant_execute(g, cfg, None, xs)
        split_g, _ = apply_transforms(g, TransformConfig(split_activations=False,
                                                         kmeans_seed=1))
        sout, _ = fake_quant_execute(split_g, cfg, None,
                                     [{"x": x["x"]} for x in xs])
        out_name = split_g.outputs[0]

        def sse(outs, key):
            return sum(
                (a - b) ** 2
                for r, o in zip(ref, outs)
                for a, b in zip(r.data, o[key].data)
            )

        assert sse(sout, out_name) < sse(base, "fc")
