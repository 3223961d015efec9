"""Time the numba kernels against the numpy fallbacks.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --queries 500 --gallery 20000 --repeats 7

Each kernel runs once untimed per backend (numba pays its compile cost
there), then the median of the timed repeats is reported.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from anyshot import kernels


def _median_seconds(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench_ranked_stats(nq: int, ng: int, repeats: int, rng) -> dict[str, float]:
    rel = (rng.random((nq, ng)) < 0.05).astype(np.uint8)
    out = {}
    for name in ("numpy", "numba"):
        fn = (
            kernels.ranked_stats_numpy
            if name == "numpy"
            else kernels.ranked_stats_numba
        )
        fn(rel, 100)  # warmup; numba compiles here
        out[name] = _median_seconds(lambda: fn(rel, 100), repeats)
    return out


def bench_hamming(nq: int, ng: int, n_bytes: int, repeats: int, rng) -> dict[str, float]:
    q = rng.integers(0, 256, (nq, n_bytes), dtype=np.uint8)
    g = rng.integers(0, 256, (ng, n_bytes), dtype=np.uint8)
    out = {}
    for name in ("numpy", "numba"):
        fn = (
            kernels.hamming_distances_numpy
            if name == "numpy"
            else kernels.hamming_distances_numba
        )
        fn(q, g)
        out[name] = _median_seconds(lambda: fn(q, g), repeats)
    return out


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--queries", type=int, default=200)
    parser.add_argument("--gallery", type=int, default=10000)
    parser.add_argument("--code-bytes", type=int, default=8)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if not kernels.HAS_NUMBA:
        print("numba is not importable; nothing to compare")
        return 1

    rng = np.random.default_rng(args.seed)
    rows = [
        (
            f"ranked_stats {args.queries}x{args.gallery}",
            bench_ranked_stats(args.queries, args.gallery, args.repeats, rng),
        ),
        (
            f"hamming {args.queries}x{args.gallery} ({args.code_bytes}B codes)",
            bench_hamming(
                args.queries, args.gallery, args.code_bytes, args.repeats, rng
            ),
        ),
    ]
    width = max(len(name) for name, _ in rows)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'numba':>10}  speedup")
    for name, res in rows:
        speed = res["numpy"] / res["numba"] if res["numba"] > 0 else float("inf")
        print(
            f"{name:<{width}}  {res['numpy'] * 1e3:>8.2f}ms  "
            f"{res['numba'] * 1e3:>8.2f}ms  {speed:>6.1f}x"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
