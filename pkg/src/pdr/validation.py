"""Shared input validation helpers."""

from __future__ import annotations

import numpy as np


def as_update_matrix(updates, n_features: int | None = None) -> np.ndarray:
    """Coerce a batch of update vectors to a float64 (n, p) matrix.

    Accepts a 2-D array or a sequence of 1-D vectors. Raises ValueError on
    ragged input or on a feature-count mismatch with ``n_features``.
    """
    X = np.asarray(updates, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D batch of vectors, got ndim={X.ndim}")
    if X.shape[0] == 0:
        raise ValueError("empty update batch")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(
            f"dimension mismatch: vectors have length {X.shape[1]}, "
            f"expected {n_features}"
        )
    return X


def as_vector(x, n_features: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got ndim={x.ndim}")
    if n_features is not None and x.shape[0] != n_features:
        raise ValueError(
            f"dimension mismatch: vector has length {x.shape[0]}, "
            f"expected {n_features}"
        )
    return x


def as_sample_counts(sample_counts, n: int) -> np.ndarray:
    """Per-client sample counts; defaults to uniform weighting."""
    if sample_counts is None:
        return np.ones(n, dtype=np.float64)
    s = np.asarray(sample_counts, dtype=np.float64)
    if s.shape != (n,):
        raise ValueError(f"sample_counts must have shape ({n},), got {s.shape}")
    if not np.all(s > 0):
        raise ValueError("sample_counts must be positive")
    return s


def check_weights(weights, n: int, tol: float = 1e-9) -> np.ndarray:
    """Validate a reliability-weight vector: length n, >= 0, sums to 1."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ValueError(f"weights must have shape ({n},), got {w.shape}")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if abs(w.sum() - 1.0) > tol:
        raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
    return w


def check_unit_interval(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in the open interval (0, 1), got {value}")
    return value
