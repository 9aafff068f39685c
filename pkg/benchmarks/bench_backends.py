#!/usr/bin/env python3
"""Benchmark: compiled kernels vs the pure-NumPy fallback.

Times the two hot resampling paths (row-pairs refits and the fixed-design
wild engine) on a few representative shapes, checks that the backends agree
numerically, and prints a speedup table.

Run:  python benchmarks/bench_backends.py [--reps 4000]
"""

from __future__ import annotations

import argparse
import time
import warnings

import numpy as np

import robustinf as ri
from robustinf._backend import has_compiled, set_backend
from robustinf.errors import ReplicationCountWarning


def _make_data(n: int, k: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, k - 1))
    y = 1.0 + X @ np.linspace(0.5, 1.5, k - 1) + rng.normal(size=n)
    return ri.build_dataset(y, X, [f"x{j}" for j in range(1, k)])


def _time(fn, repeats: int = 3) -> tuple[float, object]:
    best, result = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def run_case(name, data, plan, runner, se_kind):
    timings = {}
    dists = {}
    for backend in ("python", "compiled"):
        set_backend(backend)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ReplicationCountWarning)
            timings[backend], dists[backend] = _time(
                lambda: runner(data, plan, se_kind=se_kind)
            )
    set_backend("auto")
    agree = np.allclose(
        dists["python"].coefficients, dists["compiled"].coefficients,
        rtol=1e-10, atol=1e-12,
    )
    speedup = timings["python"] / timings["compiled"]
    print(
        f"{name:<34} python {timings['python'] * 1e3:9.1f} ms   "
        f"compiled {timings['compiled'] * 1e3:9.1f} ms   "
        f"speedup {speedup:5.1f}x   agree={agree}"
    )
    return agree


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=4000)
    args = parser.parse_args()

    if not has_compiled():
        print("compiled kernels unavailable; nothing to compare")
        return 1

    print(f"replications per case: {args.reps}\n")
    ok = True
    cases = [
        ("pairs n=200 k=3 (conventional SE)", 200, 3, "pairs",
         ri.bootstrap_pairs, "conventional"),
        ("pairs n=500 k=6 (HC1 SE)", 500, 6, "pairs", ri.bootstrap_pairs, "hc1"),
        ("wild n=200 k=3 (HC1 SE)", 200, 3, "wild", ri.bootstrap_wild, "hc1"),
        ("wild n=1000 k=6 (HC3 SE)", 1000, 6, "wild", ri.bootstrap_wild, "hc3"),
        ("residual n=500 k=4 (conventional)", 500, 4, "residual",
         ri.bootstrap_residual, "conventional"),
    ]
    for name, n, k, scheme, runner, se_kind in cases:
        data = _make_data(n, k)
        plan = ri.ResamplePlan(scheme=scheme, replications=args.reps, seed=42)
        ok &= run_case(name, data, plan, runner, se_kind)

    print("\nbackends agree on every case:", ok)
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
