"""Seeded random projections with subspace-embedding guarantees.

Two constructions are provided. The sparse one draws each entry of the k x p
matrix independently as +sqrt(s/k) with probability 1/(2s), -sqrt(s/k) with
probability 1/(2s) and 0 otherwise; the Gaussian one draws N(0, 1/k) entries.
Both preserve all pairwise distances of any M-vector set within (1 +/- eps)
with probability 1 - delta once k clears :func:`min_projection_dim`.

The sparse matrix is applied matrix-free: entries are regenerated from a
counter-based hash of (seed, column, row), so a 4096 x 10^6 matrix costs about
1 GiB of packed structure instead of 32 GiB dense.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import _kernels
from .validation import as_update_matrix, as_vector, check_unit_interval

__all__ = [
    "min_projection_dim",
    "sparse_nonzero_count",
    "ProjectionSpec",
    "SparseProjection",
    "GaussianProjection",
    "build_projection",
    "RandomProjector",
]


def min_projection_dim(n_vectors: int, epsilon: float, delta: float,
                       rounds: int | None = None) -> int:
    """Smallest target dimension embedding the span of ``n_vectors`` vectors.

    Returns ceil((18 / eps^2) * (M + 2 ln(2/delta))). When ``rounds`` is
    given, delta is budgeted across T independent matrices by a union bound
    and the log term becomes ln(2T/delta). Any k at or above the returned
    value preserves every norm in the span within (1 +/- eps) with
    probability at least 1 - delta.
    """
    if n_vectors < 1:
        raise ValueError(f"n_vectors must be >= 1, got {n_vectors}")
    epsilon = check_unit_interval("epsilon", epsilon)
    delta = check_unit_interval("delta", delta)
    if rounds is None:
        log_term = math.log(2.0 / delta)
    else:
        if rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {rounds}")
        log_term = math.log(2.0 * rounds / delta)
    return math.ceil(18.0 / epsilon ** 2 * (n_vectors + 2.0 * log_term))


@dataclass(frozen=True)
class ProjectionSpec:
    """Parameters defining how per-round projection matrices are built.

    ``k_override`` pins the target dimension explicitly; otherwise it is
    computed from the client count (and ``rounds``, when set) via
    :func:`min_projection_dim`.
    """

    epsilon: float = 0.5
    delta: float = 0.01
    rounds: int | None = None
    sparsity: int = 8
    kind: str = "sparse"
    k_override: int | None = None
    precision: str = "float64"

    def __post_init__(self):
        check_unit_interval("epsilon", self.epsilon)
        check_unit_interval("delta", self.delta)
        if self.sparsity < 1:
            raise ValueError(f"sparsity must be >= 1, got {self.sparsity}")
        if self.kind not in ("sparse", "gaussian"):
            raise ValueError(f"kind must be 'sparse' or 'gaussian', got {self.kind!r}")
        if self.rounds is not None and self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if self.k_override is not None and self.k_override < 1:
            raise ValueError(f"k_override must be >= 1, got {self.k_override}")
        if self.precision not in ("float64", "float32"):
            raise ValueError(
                f"precision must be 'float64' or 'float32', got {self.precision!r}")

    def target_dim(self, n_vectors: int) -> int:
        if self.k_override is not None:
            return self.k_override
        return min_projection_dim(n_vectors, self.epsilon, self.delta, self.rounds)


class SparseProjection:
    """Implicit k x p three-point sparse projection matrix.

    Immutable once built; safe to share across workers. The nonzero
    structure is a pure function of (seed, k, p, sparsity), so rebuilding
    with the same parameters yields a bit-identical matrix.
    """

    kind = "sparse"

    def __init__(self, k: int, p: int, sparsity: int, seed: int,
                 precision: str = "float64"):
        if k < 1 or p < 1:
            raise ValueError("k and p must be positive")
        if sparsity < 1:
            raise ValueError("sparsity must be >= 1")
        if precision not in ("float64", "float32"):
            raise ValueError("precision must be 'float64' or 'float32'")
        self.k = int(k)
        self.p = int(p)
        self.sparsity = int(sparsity)
        self.seed = int(seed) & ((1 << 64) - 1)
        self.precision = precision
        self.dtype = np.dtype(precision)
        self.scale = math.sqrt(sparsity / k)
        self._thr = _kernels.sign_threshold(self.sparsity)
        self._band_rows = _kernels.choose_band_rows(self.k, 64)
        self._n_bands = (self.k + self._band_rows - 1) // self._band_rows
        self._build()

    def _build(self):
        counts = np.empty((self.p, self._n_bands), np.uint16)
        _kernels.count_band_nonzeros(np.uint64(self.seed), self.k, self.p, self._thr,
                                     self._n_bands, self._band_rows, counts)
        wide = counts.astype(np.int64)
        band_totals = wide.sum(axis=0)
        band_base = np.zeros(self._n_bands + 1, np.int64)
        np.cumsum(band_totals, out=band_base[1:])
        cursors = np.empty((self.p, self._n_bands), np.int64)
        np.cumsum(wide, axis=0, out=cursors)
        cursors -= wide
        cursors += band_base[:-1]
        packed = np.empty(band_base[-1], np.uint16)
        _kernels.fill_band_entries(np.uint64(self.seed), self.k, self.p, self._thr,
                                   self._n_bands, self._band_rows, cursors, packed)
        self._counts = counts
        self._cursors = cursors
        self._packed = packed
        self._nnz = int(band_base[-1])

    @property
    def nnz(self) -> int:
        return self._nnz

    @property
    def density(self) -> float:
        return self._nnz / (self.k * self.p)

    def column_entries(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """(row indices, signs) of the nonzeros in column ``j``."""
        if not 0 <= j < self.p:
            raise IndexError(f"column {j} out of range for p={self.p}")
        rows, signs = [], []
        for band in range(self._n_bands):
            cur = self._cursors[j, band]
            chunk = self._packed[cur:cur + self._counts[j, band]]
            rows.append((chunk & 0x7FFF).astype(np.int64) + band * self._band_rows)
            signs.append(1 - 2 * (chunk >> 15).astype(np.int64))
        return np.concatenate(rows), np.concatenate(signs)

    def project(self, x) -> np.ndarray:
        """Project one p-vector to k dimensions."""
        x = as_vector(x, self.p)
        return self.project_batch(x.reshape(1, -1))[0]

    def project_batch(self, updates) -> np.ndarray:
        """Project a batch of p-vectors; returns an (n, k) array.

        Output is bitwise independent of batch composition and thread
        count: each projected vector depends only on the matrix seed and
        its own coordinates.
        """
        X = as_update_matrix(updates, self.p)
        m = X.shape[0]
        x_cols = np.ascontiguousarray(X.T, dtype=self.dtype)
        n_blocks = _kernels.N_COL_BLOCKS
        block_cols = (self.p + n_blocks - 1) // n_blocks
        block_start = np.empty((self._n_bands, n_blocks), np.int64)
        for band in range(self._n_bands):
            for block in range(n_blocks):
                j0 = min(block * block_cols, self.p - 1)
                block_start[band, block] = self._cursors[j0, band]
        acc = np.zeros((self._n_bands * n_blocks, self._band_rows, m),
                       dtype=self.dtype)
        _kernels.apply_dispatch(self._packed, self._counts, block_start,
                                self._n_bands, n_blocks, block_cols, x_cols, acc)
        acc = acc.reshape(self._n_bands, n_blocks, self._band_rows, m)
        bands = acc.sum(axis=1)
        out = bands.reshape(self._n_bands * self._band_rows, m)[:self.k]
        return np.ascontiguousarray(out.T * self.dtype.type(self.scale))

    def toarray(self) -> np.ndarray:
        """Dense matrix, for small problems and tests only."""
        if self.k * self.p > 50_000_000:
            raise ValueError("matrix too large to densify; use project_batch")
        dense = np.zeros((self.k, self.p))
        for j in range(self.p):
            rows, signs = self.column_entries(j)
            dense[rows, j] = signs * self.scale
        return dense


class GaussianProjection:
    """Dense k x p matrix with i.i.d. N(0, 1/k) entries, Philox-seeded."""

    kind = "gaussian"

    def __init__(self, k: int, p: int, seed: int, precision: str = "float64"):
        if k < 1 or p < 1:
            raise ValueError("k and p must be positive")
        if k * p > 200_000_000:
            raise ValueError(
                f"dense Gaussian matrix with {k}x{p} entries is infeasible; "
                "use the sparse construction"
            )
        self.k = int(k)
        self.p = int(p)
        self.seed = int(seed) & ((1 << 64) - 1)
        rng = np.random.Generator(np.random.Philox(key=self.seed))
        self._matrix = (rng.standard_normal((k, p)) / math.sqrt(k)).astype(precision)

    @property
    def nnz(self) -> int:
        return self.k * self.p

    @property
    def dtype(self) -> np.dtype:
        return self._matrix.dtype

    def project(self, x) -> np.ndarray:
        x = as_vector(x, self.p)
        return self._matrix @ x

    def project_batch(self, updates) -> np.ndarray:
        X = as_update_matrix(updates, self.p)
        return X @ self._matrix.T

    def toarray(self) -> np.ndarray:
        return self._matrix.copy()


def sparse_nonzero_count(k: int, p: int, sparsity: int, seed: int) -> int:
    """Nonzero count of the implicit sparse matrix, without building it.

    Streams the counter-based entry draws, so matrices far too large to
    store (k p in the billions) can still be checked against the expected
    density 1/s.
    """
    if k < 1 or p < 1 or sparsity < 1:
        raise ValueError("k, p and sparsity must be positive")
    thr = _kernels.sign_threshold(sparsity)
    return int(_kernels.count_total_nonzeros(
        np.uint64(int(seed) & ((1 << 64) - 1)), k, p, thr))


def build_projection(spec: ProjectionSpec, p: int, seed: int, *,
                     n_vectors: int | None = None):
    """Construct the projection described by ``spec`` for input dimension p.

    ``n_vectors`` feeds the subspace-embedding bound when ``k_override`` is
    absent.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if spec.k_override is not None:
        k = spec.k_override
    else:
        if n_vectors is None:
            raise ValueError("n_vectors is required when k_override is absent")
        k = spec.target_dim(n_vectors)
    if spec.kind == "gaussian":
        return GaussianProjection(k, p, seed, precision=spec.precision)
    return SparseProjection(k, p, spec.sparsity, seed, precision=spec.precision)


class RandomProjector(BaseEstimator, TransformerMixin):
    """Distance-preserving random projection with a fit/transform API.

    ``fit`` sizes the target dimension from the number of fitted vectors via
    the subspace-embedding bound (unless ``k_override`` is given) and freezes
    a seeded matrix; ``transform`` applies it.

    Parameters
    ----------
    epsilon, delta : floats in (0, 1)
        Distortion tolerance and failure probability of the embedding.
    rounds : int, optional
        Union-bound budget when one of several per-round matrices.
    sparsity : int
        Three-point law parameter s; expected fraction 1/s of entries
        are nonzero.
    kind : {"sparse", "gaussian"}
    k_override : int, optional
        Explicit target dimension, bypassing the bound.
    random_state : int
        Seed for the matrix entries.
    """

    def __init__(self, epsilon=0.5, delta=0.01, rounds=None, sparsity=8,
                 kind="sparse", k_override=None, random_state=0):
        self.epsilon = epsilon
        self.delta = delta
        self.rounds = rounds
        self.sparsity = sparsity
        self.kind = kind
        self.k_override = k_override
        self.random_state = random_state

    def _spec(self) -> ProjectionSpec:
        return ProjectionSpec(epsilon=self.epsilon, delta=self.delta,
                              rounds=self.rounds, sparsity=self.sparsity,
                              kind=self.kind, k_override=self.k_override)

    def fit(self, X, y=None):
        X = as_update_matrix(X)
        self.n_features_in_ = X.shape[1]
        self.projection_ = build_projection(
            self._spec(), X.shape[1], self.random_state, n_vectors=X.shape[0])
        self.n_components_ = self.projection_.k
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "projection_"):
            raise NotFittedError("RandomProjector must be fitted before transform")
        return self.projection_.project_batch(X)
