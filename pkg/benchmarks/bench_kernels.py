#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Times conv3d forward/backward and pool3d forward over a few batch shapes
and prints a per-call comparison table.  Run after building the extension:

    python3 setup.py build_ext --inplace
    python3 benchmarks/bench_kernels.py
"""

from __future__ import annotations

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from temploc.net import _kernels_py  # noqa: E402

try:
    from temploc.net import _kernels
except ImportError:
    _kernels = None

SHAPES = [
    # (batch, cin, t, h, w, cout)
    (16, 1, 8, 8, 8, 4),
    (16, 4, 8, 8, 8, 8),
    (64, 4, 8, 8, 8, 8),
    (8, 8, 16, 16, 16, 16),
]


def timeit(fn, *args, repeat: int = 5) -> float:
    fn(*args)  # warm up
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    if _kernels is None:
        print("compiled extension not built; run: python3 setup.py build_ext --inplace")
        return 1
    rng = np.random.default_rng(0)
    header = f"{'shape':28s} {'op':14s} {'numpy':>10s} {'compiled':>10s} {'ratio':>7s}"
    print(header)
    print("-" * len(header))
    for n, ci, t, h, w, co in SHAPES:
        x = rng.normal(size=(n, ci, t, h, w))
        weight = rng.normal(size=(co, ci, 3, 3, 3))
        bias = rng.normal(size=co)
        dy = rng.normal(size=(n, co, t, h, w))
        label = f"{n}x{ci}x{t}x{h}x{w} -> {co}"

        for op, args_py in (
            ("conv3d fwd", (x, weight, bias)),
            ("conv3d bwd", (x, weight, dy)),
        ):
            fn_py = _kernels_py.conv3d_forward if "fwd" in op else _kernels_py.conv3d_backward
            fn_cy = _kernels.conv3d_forward if "fwd" in op else _kernels.conv3d_backward
            t_py = timeit(fn_py, *args_py)
            t_cy = timeit(fn_cy, *args_py)
            print(f"{label:28s} {op:14s} {t_py * 1e3:9.2f}ms {t_cy * 1e3:9.2f}ms "
                  f"{t_py / t_cy:6.2f}x")
        t_py = timeit(_kernels_py.pool3d_forward, x, 2, 2)
        t_cy = timeit(_kernels.pool3d_forward, x, 2, 2)
        print(f"{label:28s} {'pool3d fwd':14s} {t_py * 1e3:9.2f}ms {t_cy * 1e3:9.2f}ms "
              f"{t_py / t_cy:6.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
