"""Numba kernels for implicit sparse random projection matrices.

The matrix is never materialized densely. Each entry is drawn from a
counter-based hash of (seed, column, row), so the nonzero structure is a pure
function of (seed, k, p, s) and can be regenerated or streamed at will.

Storage layout: nonzeros are grouped into horizontal row bands so that the
output accumulator touched by one band fits in L2 during application. Within a
band, entries are ordered column-major with ascending rows, and each entry
packs its band-local row index and sign into one uint16. The accumulation
order seen by any output element is fixed by (column block, column) alone, so
results are bitwise independent of thread count and band geometry.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange, uint64

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SIGN_BIT = np.uint16(0x8000)
_ROW_MASK = np.uint16(0x7FFF)

# Number of column blocks is a fixed constant: it defines the summation order
# of partial accumulators and therefore must not depend on the thread count.
N_COL_BLOCKS = 4


@njit(uint64(uint64), inline="always", cache=True)
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(uint64(uint64, uint64), inline="always", cache=True)
def _column_state(seed, col):
    return _mix(seed ^ _mix(col + np.uint64(1)))


@njit(cache=True, parallel=True)
def count_band_nonzeros(seed, k, p, thr, n_bands, band_rows, counts):
    """Per (column, band) nonzero counts of the implicit matrix."""
    useed = np.uint64(seed)
    neg = np.uint64(0) - thr
    for j in prange(p):
        state = _column_state(useed, np.uint64(j))
        for band in range(n_bands):
            lo = band * band_rows
            hi = min(lo + band_rows, k)
            n = 0
            for i in range(lo, hi):
                r = _mix(state + np.uint64(i + 1) * _GAMMA)
                if r < thr or r >= neg:
                    n += 1
            counts[j, band] = n


@njit(cache=True, parallel=True)
def fill_band_entries(seed, k, p, thr, n_bands, band_rows, cursors, packed):
    """Regenerate the entry stream and write packed (row, sign) codes."""
    useed = np.uint64(seed)
    neg = np.uint64(0) - thr
    for j in prange(p):
        state = _column_state(useed, np.uint64(j))
        for band in range(n_bands):
            lo = band * band_rows
            hi = min(lo + band_rows, k)
            cur = cursors[j, band]
            for i in range(lo, hi):
                r = _mix(state + np.uint64(i + 1) * _GAMMA)
                if r < thr:
                    packed[cur] = np.uint16(i - lo)
                    cur += 1
                elif r >= neg:
                    packed[cur] = np.uint16(i - lo) | _SIGN_BIT
                    cur += 1


@njit(cache=True, parallel=True, fastmath=True)
def apply_banded(packed, counts, block_start, n_bands, n_blocks, block_cols,
                 x_cols, acc):
    """acc[band * n_blocks + block] += unscaled partial products.

    ``x_cols`` is the (p, m) column-major view of the input batch; ``acc`` has
    shape (n_bands * n_blocks, band_rows, m). Each task owns one accumulator
    slab, so scheduling cannot interleave writes.
    """
    p, m = x_cols.shape
    for task in prange(n_bands * n_blocks):
        band = task // n_blocks
        block = task % n_blocks
        j0 = block * block_cols
        j1 = min(j0 + block_cols, p)
        out = acc[task]
        cur = block_start[band, block]
        for j in range(j0, j1):
            n = counts[j, band]
            if n > 0:
                x = x_cols[j]
                for t in range(cur, cur + n):
                    v = packed[t]
                    row = np.int64(v & _ROW_MASK)
                    sign = 1.0 - 2.0 * np.float64(v >> np.uint16(15))
                    for q in range(m):
                        out[row, q] += sign * x[q]
                cur += n


# Specializing the batch width to a compile-time constant lets LLVM unroll
# and vectorize the innermost accumulation, worth ~40% on wide batches.
# Narrow batches stay on the generic kernel to avoid JIT churn.
SPECIALIZE_MIN_WIDTH = 16
_specialized = {}


def _make_specialized(m_const: int):
    @njit(cache=False, parallel=True, fastmath=True)
    def apply_fixed(packed, counts, block_start, n_bands, n_blocks,
                    block_cols, x_cols, acc):
        p = x_cols.shape[0]
        for task in prange(n_bands * n_blocks):
            band = task // n_blocks
            block = task % n_blocks
            j0 = block * block_cols
            j1 = min(j0 + block_cols, p)
            out = acc[task]
            cur = block_start[band, block]
            for j in range(j0, j1):
                n = counts[j, band]
                if n > 0:
                    x = x_cols[j]
                    for t in range(cur, cur + n):
                        v = packed[t]
                        row = np.int64(v & _ROW_MASK)
                        sign = 1.0 - 2.0 * np.float64(v >> np.uint16(15))
                        for q in range(m_const):
                            out[row, q] += sign * x[q]
                    cur += n

    return apply_fixed


def apply_dispatch(packed, counts, block_start, n_bands, n_blocks, block_cols,
                   x_cols, acc):
    m = x_cols.shape[1]
    if m >= SPECIALIZE_MIN_WIDTH:
        kernel = _specialized.get(m)
        if kernel is None:
            kernel = _specialized[m] = _make_specialized(m)
        kernel(packed, counts, block_start, n_bands, n_blocks, block_cols,
               x_cols, acc)
    else:
        apply_banded(packed, counts, block_start, n_bands, n_blocks,
                     block_cols, x_cols, acc)


@njit(cache=True, parallel=True)
def count_total_nonzeros(seed, k, p, thr):
    """Nonzero count of the implicit matrix without materializing it."""
    useed = np.uint64(seed)
    neg = np.uint64(0) - thr
    total = 0
    for j in prange(p):
        state = _column_state(useed, np.uint64(j))
        n = 0
        for i in range(k):
            r = _mix(state + np.uint64(i + 1) * _GAMMA)
            if r < thr or r >= neg:
                n += 1
        total += n
    return total


def sign_threshold(sparsity: int) -> np.uint64:
    """64-bit threshold t such that P(draw < t) = 1/(2s) per sign.

    Exact for power-of-two sparsity; otherwise quantized to the nearest
    multiple of 2**-64, an error below 1e-18 in probability.
    """
    if sparsity == 1:
        return np.uint64(1) << np.uint64(63)
    return np.uint64(round(2.0 ** 64 / (2.0 * sparsity)))


def choose_band_rows(k: int, m: int) -> int:
    """Band height keeping one accumulator slab near 256 KiB."""
    target = max(64, 262144 // (8 * max(m, 1)))
    band = 64
    while band * 2 <= min(target, 32768):
        band *= 2
    return min(band, max(k, 1), 32768)
