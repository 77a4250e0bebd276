"""Benchmark the compiled kernels against their numpy fallbacks.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats N]

Each kernel is first checked for agreement between the two paths on the
benchmark inputs (a benchmark of wrong answers is worthless), the
compiled path is warmed up so one-time JIT compilation stays out of the
timings, and then both paths run `--repeats` times; the table reports
the best wall time of each and the speedup.  Run under
DIQRNG_NO_NUMBA=1 to confirm the fallback selection itself (the script
then reports the numpy path only).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from diqrng import _kernels


def _best_time(fn, args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def _row(name: str, numpy_fn, jit_fn, args, repeats: int) -> str:
    got_numpy = numpy_fn(*args)
    if jit_fn is not None:
        got_jit = jit_fn(*args)
        if not np.array_equal(got_numpy, got_jit):
            raise AssertionError(f"{name}: compiled and numpy paths disagree")
        jit_fn(*args)  # warm (compilation already triggered above)
    t_numpy = _best_time(numpy_fn, args, repeats)
    if jit_fn is None:
        return f"{name:<26} {t_numpy * 1e3:>10.2f} {'-':>10} {'-':>8}"
    t_jit = _best_time(jit_fn, args, repeats)
    return (f"{name:<26} {t_numpy * 1e3:>10.2f} {t_jit * 1e3:>10.2f} "
            f"{t_numpy / t_jit:>7.1f}x")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed repetitions per path (best is reported)")
    args = parser.parse_args()

    rng = np.random.default_rng(12345)
    jit = _kernels.JIT_ENABLED

    # sampling: 4-outcome distribution, 10M draws
    probs = np.array([0.15, 0.35, 0.05, 0.45])
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    u = rng.random(10_000_000)

    # von Neumann: 20M biased bits
    vn_bits = (rng.random(20_000_000) < 0.7).astype(np.uint8)

    # Toeplitz: hash 1M bits down to 4096
    in_len, out_len = 1_000_000, 4096
    seed_bits = (rng.random(in_len + out_len - 1) < 0.5).astype(np.uint8)
    x_bits = (rng.random(in_len) < 0.5).astype(np.uint8)

    status = ("enabled" if jit
              else "disabled via DIQRNG_NO_NUMBA" if _kernels.NUMBA_DISABLED
              else "not importable")
    print(f"backend: {_kernels.backend()}   (numba {status})")
    print(f"{'kernel':<26} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    print("-" * 58)
    print(_row("sample_outcomes 1e7", _kernels.sample_outcomes_numpy,
               _kernels.sample_outcomes_jit if jit else None,
               (cdf, u), args.repeats))
    print(_row("von_neumann_pairs 2e7", _kernels.von_neumann_pairs_numpy,
               _kernels.von_neumann_pairs_jit if jit else None,
               (vn_bits,), args.repeats))
    print(_row("toeplitz_gf2 1e6->4096", _kernels.toeplitz_gf2_numpy,
               _kernels.toeplitz_gf2_jit if jit else None,
               (seed_bits, x_bits, out_len), args.repeats))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
