#!/usr/bin/env python3
"""Benchmark: compiled kernel extension vs the pure-Python fallback.

Times the hot kernels on fixed seeded inputs and a full fake-quantized
model evaluation, then prints a table with the speedup. Both backends are
bit-compatible, so the outputs are also diffed while we are at it.

Usage: python benchmarks/compare_backends.py [--repeats N]
"""

from __future__ import annotations

import argparse
import importlib
import sys
import time
from array import array


def best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        dt = time.perf_counter() - t0
        if dt < best:
            best = dt
    return best


def make_cases():
    from trisect.rng import Rng

    rng = Rng(2024)

    def buf(n):
        return array("f", [rng.normal() for _ in range(n)])

    a128 = buf(128 * 128)
    b128 = buf(128 * 128)
    img = buf(8 * 32 * 32)
    kern = buf(16 * 8 * 3 * 3)
    bias = buf(16)
    vec = buf(64 * 64)
    return [
        ("matmul 128x128x128", lambda k: k.matmul(a128, b128, 128, 128, 128)),
        ("conv2d 8x32x32 -> 16 3x3", lambda k: k.conv2d(img, 8, 32, 32, kern, 16, 3, 3, bias, 1, 1, 32, 32)),
        ("gelu 4096", lambda k: k.gelu(vec)),
        ("fake_quant 4096", lambda k: k.fake_quant(vec, 42.5, -3, -128, 127)),
        ("add 4096", lambda k: k.add(vec, vec)),
    ]


def model_case():
    """Full pipeline: rewrite + fake-quant evaluation of a small model."""
    from trisect.metrics import run_experiment

    def run():
        run_experiment(0, 2, True, width=32, depth=3, n_samples=32)

    return run


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5, help="best-of-N timing")
    args = parser.parse_args()

    py = importlib.import_module("trisect._pykernels")
    try:
        cy = importlib.import_module("trisect._ckernels")
    except ImportError:
        print("compiled extension not built; only the pure backend is available")
        cy = None

    print(f"{'kernel':<28} {'python':>12} {'compiled':>12} {'speedup':>9}  identical")
    for name, fn in make_cases():
        t_py = best_of(lambda: fn(py), args.repeats)
        if cy is None:
            print(f"{name:<28} {t_py * 1e3:>10.3f}ms {'-':>12} {'-':>9}")
            continue
        t_cy = best_of(lambda: fn(cy), args.repeats)
        same = fn(py).tobytes() == fn(cy).tobytes()
        print(f"{name:<28} {t_py * 1e3:>10.3f}ms {t_cy * 1e3:>10.3f}ms {t_py / t_cy:>8.1f}x  {same}")

    if cy is not None:
        import os
        import subprocess

        # the full-model comparison needs fresh interpreters, since the
        # backend is chosen at import time
        code = ("import time, benchmarks.compare_backends as b; "
                "f=b.model_case(); f(); t0=time.perf_counter(); f(); "
                "print(time.perf_counter()-t0)")
        env = dict(os.environ)
        env.pop("TRISECT_PURE_PYTHON", None)
        t_cy = float(subprocess.check_output([sys.executable, "-c", code], env=env))
        env["TRISECT_PURE_PYTHON"] = "1"
        t_py = float(subprocess.check_output([sys.executable, "-c", code], env=env))
        print(f"{'experiment (width 32)':<28} {t_py * 1e3:>10.3f}ms {t_cy * 1e3:>10.3f}ms "
              f"{t_py / t_cy:>8.1f}x  -")
    return 0


if __name__ == "__main__":
    sys.exit(main())
