"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

Three loops dominate runtime at production sizes: inverse-CDF shot
sampling, von Neumann pair scanning, and the GF(2) Toeplitz product
(~1e10 bit operations for 1e5-bit streams if done naively).  Each kernel
ships in two implementations that produce identical outputs:

* ``*_jit``   — numba ``@njit`` (packed 64-bit words for Toeplitz),
* ``*_numpy`` — vectorized numpy (FFT convolution for Toeplitz).

Set ``DIQRNG_NO_NUMBA=1`` to select the numpy path; it is also chosen
automatically when numba is not importable.  ``benchmarks/bench_kernels.py``
times the two paths against each other.
"""

from __future__ import annotations

import os

import numpy as np

_ENV_FLAG = "DIQRNG_NO_NUMBA"
NUMBA_DISABLED = os.environ.get(_ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}

if not NUMBA_DISABLED:
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:  # pragma: no cover - exercised via env flag instead
        HAS_NUMBA = False
else:
    HAS_NUMBA = False

JIT_ENABLED = HAS_NUMBA and not NUMBA_DISABLED


def backend() -> str:
    """Name of the active kernel path: "numba" or "numpy"."""
    return "numba" if JIT_ENABLED else "numpy"


# ============================================================
# inverse-CDF sampling
# ============================================================

def sample_outcomes_numpy(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Map uniforms in [0,1) to outcome indices via the cumulative table."""
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, cdf.size - 1).astype(np.int64)


# ============================================================
# von Neumann pair scan
# ============================================================

def von_neumann_pairs_numpy(bits: np.ndarray) -> np.ndarray:
    """Keep the first bit of each non-overlapping unequal pair."""
    m = bits.size // 2
    pairs = bits[: 2 * m].reshape(m, 2)
    keep = pairs[:, 0] != pairs[:, 1]
    return np.ascontiguousarray(pairs[keep, 0])


# ============================================================
# GF(2) Toeplitz product
# ============================================================
# Convention (documented in randomness.toeplitz_extract): T[i, j] =
# seed[(n-1) + i - j] for input length n, so row i of T*x is the full
# convolution of seed and x sampled at position (n-1) + i.

def _pack_words(bits: np.ndarray, n_words: int) -> np.ndarray:
    """Pack bits into little-endian uint64 words, zero-padded to n_words."""
    buf = np.zeros(n_words * 8, dtype=np.uint8)
    packed = np.packbits(bits, bitorder="little")
    buf[: packed.size] = packed
    return buf.view("<u8")


def toeplitz_gf2_numpy(seed_bits: np.ndarray, x_bits: np.ndarray, out_len: int) -> np.ndarray:
    """FFT convolution, rounded to exact integers, reduced mod 2."""
    n = x_bits.size
    full = seed_bits.size + n - 1
    size = 1 << max(full - 1, 1).bit_length()
    fs = np.fft.rfft(seed_bits.astype(np.float64), size)
    fx = np.fft.rfft(x_bits.astype(np.float64), size)
    conv = np.fft.irfft(fs * fx, size)[n - 1 : n - 1 + out_len]
    ints = np.rint(conv)
    # counts are small integers; drift past 0.25 means the transform failed
    if ints.size and np.max(np.abs(conv - ints)) > 0.25:
        raise FloatingPointError("convolution drifted off integer lattice")
    return (ints.astype(np.int64) & 1).astype(np.uint8)


if JIT_ENABLED:

    @njit(cache=True)
    def _sample_outcomes_loop(cdf, u):  # pragma: no cover - jitted
        k = cdf.size
        out = np.empty(u.size, dtype=np.int64)
        for i in range(u.size):
            lo = 0
            hi = k
            v = u[i]
            while lo < hi:
                mid = (lo + hi) >> 1
                if cdf[mid] <= v:
                    lo = mid + 1
                else:
                    hi = mid
            if lo >= k:
                lo = k - 1
            out[i] = lo
        return out

    @njit(cache=True)
    def _von_neumann_loop(bits):  # pragma: no cover - jitted
        m = bits.size // 2
        out = np.empty(m, dtype=np.uint8)
        k = 0
        for i in range(m):
            a = bits[2 * i]
            b = bits[2 * i + 1]
            if a != b:
                out[k] = a
                k += 1
        return out[:k]

    @njit(cache=True)
    def _toeplitz_fold(seed_words, xrev_words, out_len):  # pragma: no cover - jitted
        n_words = xrev_words.size
        out = np.empty(out_len, dtype=np.uint8)
        for i in range(out_len):
            a = i >> 6
            r = i & 63
            acc = np.uint64(0)
            if r == 0:
                for t in range(n_words):
                    acc ^= seed_words[a + t] & xrev_words[t]
            else:
                rs = np.uint64(r)
                ls = np.uint64(64 - r)
                for t in range(n_words):
                    w = (seed_words[a + t] >> rs) | (seed_words[a + t + 1] << ls)
                    acc ^= w & xrev_words[t]
            # XOR-fold halves: parity of the popcount
            acc ^= acc >> np.uint64(32)
            acc ^= acc >> np.uint64(16)
            acc ^= acc >> np.uint64(8)
            acc ^= acc >> np.uint64(4)
            acc ^= acc >> np.uint64(2)
            acc ^= acc >> np.uint64(1)
            out[i] = np.uint8(acc & np.uint64(1))
        return out

    def sample_outcomes_jit(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
        return _sample_outcomes_loop(
            np.ascontiguousarray(cdf, dtype=np.float64),
            np.ascontiguousarray(u, dtype=np.float64),
        )

    def von_neumann_pairs_jit(bits: np.ndarray) -> np.ndarray:
        return _von_neumann_loop(np.ascontiguousarray(bits, dtype=np.uint8))

    def toeplitz_gf2_jit(seed_bits: np.ndarray, x_bits: np.ndarray, out_len: int) -> np.ndarray:
        # y[i] = XOR_k seed[i+k] * xrev[k], a sliding window AND-parity;
        # both operands live in packed words, window extraction shifts two.
        n_words = (x_bits.size + 63) // 64
        xrev = _pack_words(x_bits[::-1], n_words)
        max_word = (max(out_len - 1, 0) >> 6) + n_words + 1
        seed_words = _pack_words(seed_bits, max_word + 1)
        return _toeplitz_fold(seed_words, xrev, out_len)

    sample_outcomes = sample_outcomes_jit
    von_neumann_pairs = von_neumann_pairs_jit
    toeplitz_gf2 = toeplitz_gf2_jit
else:
    sample_outcomes = sample_outcomes_numpy
    von_neumann_pairs = von_neumann_pairs_numpy
    toeplitz_gf2 = toeplitz_gf2_numpy
