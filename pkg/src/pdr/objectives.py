"""Synthetic federated objectives with analytically known constants.

The quadratic task gives every client the loss
F_m(w) = 0.5 (w - theta_m)^T A (w - theta_m) with one shared diagonal
curvature A whose entries interpolate [mu, L]. Client optima are placed so
the gradient-dispersion bound max_m ||grad F_m - grad F|| equals the
configured kappa exactly, independent of w, and the weighted global optimum
has the closed form w* = sum_m S_m theta_m / sum_m S_m.

The nonconvex toy adds a sinusoidal potential with a known gradient-Lipschitz
bound on top of the quadratic; it shares the quadratic's heterogeneity and
noise structure but has no closed-form optimum.

Stochastic gradients add Gaussian noise with E||noise||^2 = sigma^2 exactly,
drawn from counter-based streams keyed by (seed, round, client).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeding import generator
from .validation import as_sample_counts, as_vector

__all__ = ["TaskSpec", "QuadraticTask", "NonconvexToyTask", "build_task",
           "lr_schedule"]

TASK_KINDS = ("quadratic", "nonconvex_toy")
SCHEDULE_KINDS = ("constant_nonconvex", "decaying_strongly_convex")


@dataclass
class TaskSpec:
    """Dimensions, curvature, heterogeneity and noise of a synthetic task."""

    p: int = 10
    n_clients: int = 5
    hetero_kappa: float = 0.0
    noise_sigma: float = 0.0
    sample_counts: list[float] | None = None
    mu: float = 1.0
    lipschitz: float = 1.0
    task_kind: str = "quadratic"
    seed: int = 0
    perturb_amplitude: float = 0.5
    perturb_frequency: float = 6.0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.n_clients < 1:
            raise ValueError("n_clients must be >= 1")
        if not 0 < self.mu <= self.lipschitz:
            raise ValueError(
                f"curvature must satisfy 0 < mu <= lipschitz, "
                f"got mu={self.mu}, lipschitz={self.lipschitz}")
        if self.hetero_kappa < 0:
            raise ValueError("hetero_kappa must be >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.task_kind not in TASK_KINDS:
            raise ValueError(f"task_kind must be one of {TASK_KINDS}")
        if self.perturb_amplitude < 0 or self.perturb_frequency <= 0:
            raise ValueError("perturbation parameters must be positive")


class QuadraticTask:
    """Strongly convex task satisfying the smoothness, convexity,
    unbiasedness, bounded-noise and bounded-heterogeneity assumptions with
    known constants."""

    def __init__(self, spec: TaskSpec):
        self.spec = spec
        p, m = spec.p, spec.n_clients
        self.curvature = (np.linspace(spec.mu, spec.lipschitz, p)
                          if p > 1 else np.array([spec.mu]))
        self.sample_counts = as_sample_counts(spec.sample_counts, m)
        share = self.sample_counts / self.sample_counts.sum()

        rng = generator(spec.seed, "task")
        center = rng.standard_normal(p)
        if m > 1 and spec.hetero_kappa > 0:
            # Sphere-like placement: dispersion vectors are weighted-centered
            # and rescaled so max_m ||A (theta_m - theta_bar)|| == kappa.
            raw = rng.standard_normal((m, p))
            raw /= np.linalg.norm(raw, axis=1, keepdims=True)
            centered = raw - share @ raw
            radius = np.linalg.norm(centered, axis=1).max()
            z = centered * (spec.hetero_kappa / radius)
            self.client_optima = center + z / self.curvature
        else:
            self.client_optima = np.tile(center, (m, 1))
        self._optimum = share @ self.client_optima

    @property
    def lipschitz(self) -> float:
        return float(self.curvature.max())

    @property
    def strong_convexity(self) -> float:
        return float(self.curvature.min())

    def client_gradient(self, m: int, w, round_index: int = 0,
                        stochastic: bool = False) -> np.ndarray:
        """grad F_m(w) = A (w - theta_m), plus seeded noise when stochastic."""
        w = as_vector(w, self.spec.p)
        if not 0 <= m < self.spec.n_clients:
            raise IndexError(f"client {m} out of range")
        grad = self.curvature * (w - self.client_optima[m])
        if stochastic and self.spec.noise_sigma > 0:
            rng = generator(self.spec.seed, "noise", round_index, m)
            scale = self.spec.noise_sigma / np.sqrt(self.spec.p)
            grad = grad + scale * rng.standard_normal(self.spec.p)
        return grad

    def global_gradient(self, w) -> np.ndarray:
        w = as_vector(w, self.spec.p)
        return self.curvature * (w - self._optimum)

    def global_loss(self, w) -> float:
        w = as_vector(w, self.spec.p)
        diff = w - self.client_optima
        share = self.sample_counts / self.sample_counts.sum()
        return float(0.5 * share @ np.einsum("ij,j,ij->i", diff, self.curvature, diff))

    def global_optimum(self) -> np.ndarray:
        """Closed-form minimizer: the sample-weighted mean of client optima."""
        return self._optimum.copy()


class NonconvexToyTask(QuadraticTask):
    """Quadratic plus a smooth sinusoidal potential.

    The perturbation (a / omega) * sum_i sin(omega w_i) is identical across
    clients, so heterogeneity and noise constants carry over unchanged while
    the Hessian dips below zero wherever a * omega exceeds mu. The gradient
    stays (L + a * omega)-Lipschitz. No closed-form optimum exists.
    """

    @property
    def lipschitz(self) -> float:
        a, omega = self.spec.perturb_amplitude, self.spec.perturb_frequency
        return float(self.curvature.max() + a * omega)

    @property
    def strong_convexity(self) -> float:
        raise ValueError("nonconvex toy task has no strong-convexity constant")

    def _perturb_gradient(self, w):
        a, omega = self.spec.perturb_amplitude, self.spec.perturb_frequency
        return a * np.cos(omega * w)

    def client_gradient(self, m, w, round_index=0, stochastic=False):
        grad = super().client_gradient(m, w, round_index, stochastic=False)
        grad = grad + self._perturb_gradient(as_vector(w, self.spec.p))
        if stochastic and self.spec.noise_sigma > 0:
            rng = generator(self.spec.seed, "noise", round_index, m)
            scale = self.spec.noise_sigma / np.sqrt(self.spec.p)
            grad = grad + scale * rng.standard_normal(self.spec.p)
        return grad

    def global_gradient(self, w):
        return super().global_gradient(w) + self._perturb_gradient(
            as_vector(w, self.spec.p))

    def global_loss(self, w) -> float:
        a, omega = self.spec.perturb_amplitude, self.spec.perturb_frequency
        w = as_vector(w, self.spec.p)
        return super().global_loss(w) + float(a / omega * np.sin(omega * w).sum())

    def global_optimum(self):
        raise ValueError("nonconvex toy task has no closed-form optimum")


def build_task(spec: TaskSpec):
    if spec.task_kind == "nonconvex_toy":
        return NonconvexToyTask(spec)
    return QuadraticTask(spec)


def lr_schedule(kind: str, lipschitz: float, mu: float | None, rounds: int,
                t: int) -> float:
    """Learning rate at round t.

    constant_nonconvex: 1 / (L sqrt(T)), which satisfies eta <= 1/L for any
    T >= 1. decaying_strongly_convex: 2 / (mu (t + gamma)) with
    gamma = 4 L / mu, whose round-0 value is exactly 1 / (2 L).
    """
    if kind not in SCHEDULE_KINDS:
        raise ValueError(f"schedule must be one of {SCHEDULE_KINDS}, got {kind!r}")
    if lipschitz <= 0:
        raise ValueError("lipschitz must be positive")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if not 0 <= t < rounds:
        raise ValueError(f"round index {t} outside [0, {rounds})")
    if kind == "constant_nonconvex":
        return 1.0 / (lipschitz * np.sqrt(rounds))
    if mu is None or mu <= 0 or mu > lipschitz:
        raise ValueError("decaying schedule needs 0 < mu <= lipschitz")
    gamma = 4.0 * lipschitz / mu
    return 2.0 / (mu * (t + gamma))
