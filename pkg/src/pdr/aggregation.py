"""Distance-based robust aggregators producing simplex reliability weights.

Every aggregator returns a weight vector (nonnegative, summing to one) rather
than an aggregated vector. Weights can therefore be computed on projected
low-dimensional copies of the updates and applied to the originals in full
dimension, which is what makes the projected pipeline possible.

Distances are computed pairwise with a fixed summation order (scipy pdist),
keeping scores exact and schedule-independent so index tie-breaks are
reproducible everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .validation import (
    as_sample_counts,
    as_update_matrix,
    check_weights,
)

__all__ = [
    "AggregatorConfig",
    "mean_weights",
    "krum_weights",
    "bulyan_select_weights",
    "geometric_median_weights",
    "apply_weights",
    "compute_weights",
    "WeightedMean",
    "Krum",
    "BulyanSelect",
    "GeometricMedian",
    "ProjectedAggregator",
]

AGGREGATOR_KINDS = ("mean", "krum", "bulyan_select", "geometric_median")

# Weiszfeld steps divide by the distance to the current iterate; when the
# iterate lands on a data point the distance is floored at this relative level.
SINGULARITY_FLOOR = 1e-12


@dataclass
class AggregatorConfig:
    """Robust-aggregator choice and parameters.

    ``assumed_byzantine`` is the aggregator's own robustness parameter f,
    not ground truth. ``weight_by_samples`` makes mean and geometric median
    weight clients by their sample counts.
    """

    kind: str = "geometric_median"
    assumed_byzantine: int = 0
    weiszfeld_max_iters: int = 100
    weiszfeld_tol: float = 1e-8
    weight_by_samples: bool = True

    def __post_init__(self):
        if self.kind not in AGGREGATOR_KINDS:
            raise ValueError(
                f"kind must be one of {AGGREGATOR_KINDS}, got {self.kind!r}")
        if self.assumed_byzantine < 0:
            raise ValueError("assumed_byzantine must be >= 0")
        if self.weiszfeld_max_iters < 1:
            raise ValueError("weiszfeld_max_iters must be >= 1")
        if self.weiszfeld_tol < 0:
            raise ValueError("weiszfeld_tol must be >= 0")

    def validate_for(self, n_clients: int) -> None:
        f = self.assumed_byzantine
        if self.kind == "krum" and n_clients < f + 3:
            raise ValueError(
                f"krum needs at least f + 3 = {f + 3} clients, got {n_clients}")
        if self.kind == "bulyan_select" and n_clients - 2 * f < 1:
            raise ValueError(
                f"bulyan_select needs more than 2f = {2 * f} clients, "
                f"got {n_clients}")


def mean_weights(updates, sample_counts=None, weight_by_samples=True) -> np.ndarray:
    """Non-robust baseline: weights proportional to sample counts.

    With ``weight_by_samples`` false (or counts absent) the weights are
    uniform 1/M.
    """
    X = as_update_matrix(updates)
    n = X.shape[0]
    if not weight_by_samples:
        return np.full(n, 1.0 / n)
    s = as_sample_counts(sample_counts, n)
    return s / s.sum()


def _sq_distances(X: np.ndarray) -> np.ndarray:
    return squareform(pdist(X, "sqeuclidean"))


def _krum_scores(sq_dists: np.ndarray, n_byzantine: int) -> np.ndarray:
    """Sum of the n - f - 2 smallest squared distances to the other vectors.

    When the neighbor count is non-positive every score is zero, which the
    iterated selection in bulyan relies on for its final picks.
    """
    n = sq_dists.shape[0]
    n_neighbors = n - n_byzantine - 2
    if n_neighbors <= 0:
        return np.zeros(n)
    scores = np.empty(n)
    for i in range(n):
        others = np.delete(sq_dists[i], i)
        others.sort()
        scores[i] = others[:n_neighbors].sum()
    return scores


def krum_weights(updates, n_byzantine: int) -> np.ndarray:
    """Indicator weights selecting the client with the lowest Krum score.

    Ties break toward the lowest client index. Requires M >= f + 3 so each
    score covers at least one neighbor.
    """
    X = as_update_matrix(updates)
    n = X.shape[0]
    if n_byzantine < 0:
        raise ValueError("n_byzantine must be >= 0")
    if n < n_byzantine + 3:
        raise ValueError(
            f"krum needs at least f + 3 = {n_byzantine + 3} clients, got {n}")
    scores = _krum_scores(_sq_distances(X), n_byzantine)
    weights = np.zeros(n)
    weights[int(np.argmin(scores))] = 1.0
    return weights


def bulyan_select_weights(updates, n_byzantine: int) -> np.ndarray:
    """Uniform weights over the M - 2f clients picked by iterated Krum.

    Each iteration removes the current Krum winner from the candidate pool
    and re-scores the remainder. Only the selection stage of Bulyan is kept:
    the classical coordinate-wise trimming stage cannot be expressed as
    scalar per-client weights.
    """
    X = as_update_matrix(updates)
    n = X.shape[0]
    if n_byzantine < 0:
        raise ValueError("n_byzantine must be >= 0")
    n_select = n - 2 * n_byzantine
    if n_select < 1:
        raise ValueError(
            f"bulyan_select needs more than 2f = {2 * n_byzantine} clients, got {n}")
    sq_dists = _sq_distances(X)
    pool = list(range(n))
    selected = []
    for _ in range(n_select):
        sub = sq_dists[np.ix_(pool, pool)]
        scores = _krum_scores(sub, n_byzantine)
        winner = pool[int(np.argmin(scores))]
        selected.append(winner)
        pool.remove(winner)
    weights = np.zeros(n)
    weights[selected] = 1.0 / n_select
    return weights


def geometric_median_weights(updates, sample_counts=None, max_iters: int = 100,
                             tol: float = 1e-8) -> np.ndarray:
    """Weiszfeld weights: inversely proportional to distance from the median.

    Starting from the sample-weighted mean, iterate
    z <- sum_m (S_m / d_m) g_m / sum_m (S_m / d_m) with d_m the distance of
    g_m from the current iterate (floored near singularities), until the
    step is below ``tol`` relative to the iterate or ``max_iters`` is
    spent. Hitting the iteration budget is normal fixed-budget behavior,
    not an error. The returned weights are the ones that produced the last
    iterate, so apply_weights(weights, updates) equals that iterate.
    """
    X = as_update_matrix(updates)
    n = X.shape[0]
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if tol < 0:
        raise ValueError("tol must be >= 0")
    s = as_sample_counts(sample_counts, n)
    z = (s / s.sum()) @ X
    weights = s / s.sum()
    for _ in range(max_iters):
        diff = X - z
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        z_norm = np.linalg.norm(z)
        dist = np.maximum(dist, SINGULARITY_FLOOR * (1.0 + z_norm))
        inv = s / dist
        weights = inv / inv.sum()
        z_next = weights @ X
        converged = np.linalg.norm(z_next - z) <= tol * (1.0 + z_norm)
        z = z_next
        if converged:
            break
    return weights


def apply_weights(weights, updates) -> np.ndarray:
    """Reconstruct the aggregate sum_m alpha_m g_m in full dimension."""
    X = as_update_matrix(updates)
    w = check_weights(weights, X.shape[0])
    return w @ X


def compute_weights(config: AggregatorConfig, updates,
                    sample_counts=None) -> np.ndarray:
    """Dispatch to the aggregator named by ``config``."""
    X = as_update_matrix(updates)
    config.validate_for(X.shape[0])
    counts = sample_counts if config.weight_by_samples else None
    if config.kind == "mean":
        return mean_weights(X, counts, weight_by_samples=config.weight_by_samples)
    if config.kind == "krum":
        return krum_weights(X, config.assumed_byzantine)
    if config.kind == "bulyan_select":
        return bulyan_select_weights(X, config.assumed_byzantine)
    return geometric_median_weights(
        X, counts, max_iters=config.weiszfeld_max_iters,
        tol=config.weiszfeld_tol)


class _WeightsEstimator(BaseEstimator):
    """Shared fit/attributes plumbing for the aggregator estimators."""

    def _weights(self, X, sample_weight):
        raise NotImplementedError

    def fit(self, X, y=None, sample_weight=None):
        X = as_update_matrix(X)
        self.n_features_in_ = X.shape[1]
        self.weights_ = self._weights(X, sample_weight)
        self.estimate_ = apply_weights(self.weights_, X)
        return self

    def fit_predict(self, X, y=None, sample_weight=None):
        return self.fit(X, sample_weight=sample_weight).estimate_


class WeightedMean(_WeightsEstimator):
    """Sample-count weighted mean; the non-robust baseline."""

    def __init__(self, weight_by_samples=True):
        self.weight_by_samples = weight_by_samples

    def _weights(self, X, sample_weight):
        return mean_weights(X, sample_weight,
                            weight_by_samples=self.weight_by_samples)


class Krum(_WeightsEstimator):
    """Selects the single client closest to its nearest neighbors."""

    def __init__(self, n_byzantine=0):
        self.n_byzantine = n_byzantine

    def _weights(self, X, sample_weight):
        return krum_weights(X, self.n_byzantine)


class BulyanSelect(_WeightsEstimator):
    """Iterated-Krum selection of M - 2f trusted clients."""

    def __init__(self, n_byzantine=0):
        self.n_byzantine = n_byzantine

    def _weights(self, X, sample_weight):
        return bulyan_select_weights(X, self.n_byzantine)


class GeometricMedian(_WeightsEstimator):
    """Weiszfeld geometric-median weights."""

    def __init__(self, max_iters=100, tol=1e-8):
        self.max_iters = max_iters
        self.tol = tol

    def _weights(self, X, sample_weight):
        return geometric_median_weights(X, sample_weight,
                                        max_iters=self.max_iters, tol=self.tol)


class ProjectedAggregator(BaseEstimator):
    """Robust aggregation in a compressed space, applied in full dimension.

    Wraps a base weight estimator and a projector: ``fit`` projects the
    update batch, computes reliability weights from the projected copies
    only, then forms the aggregate from the original full-dimensional
    vectors. The base aggregator never sees unprojected data.
    """

    def __init__(self, aggregator=None, projector=None):
        self.aggregator = aggregator
        self.projector = projector

    def fit(self, X, y=None, sample_weight=None):
        from sklearn.base import clone

        from .projection import RandomProjector

        X = as_update_matrix(X)
        aggregator = self.aggregator if self.aggregator is not None else GeometricMedian()
        projector = self.projector if self.projector is not None else RandomProjector()
        self.projector_ = clone(projector).fit(X)
        projected = self.projector_.transform(X)
        self.aggregator_ = clone(aggregator).fit(projected, sample_weight=sample_weight)
        self.weights_ = check_weights(self.aggregator_.weights_, X.shape[0])
        self.estimate_ = apply_weights(self.weights_, X)
        self.n_features_in_ = X.shape[1]
        return self

    def fit_predict(self, X, y=None, sample_weight=None):
        return self.fit(X, sample_weight=sample_weight).estimate_

    @property
    def n_components_(self):
        if not hasattr(self, "projector_"):
            raise NotFittedError("ProjectedAggregator is not fitted")
        return self.projector_.n_components_
