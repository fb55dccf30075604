"""Round-by-round simulation of projected robust aggregation.

Each round: honest clients submit stochastic gradients at the current model,
byzantine clients submit crafted vectors, the server projects all updates
with that round's seeded matrix, computes reliability weights from the
projected copies only, reconstructs the aggregate from the original
full-dimensional vectors and takes a gradient step. The aggregator never
sees unprojected data; the projection never sees byzantine flags.

Wall times cover the three server phases (projection, including the
per-round matrix build; low-dimensional weight computation; full-dimensional
reconstruction). Client gradient computation and attack crafting are
excluded, mirroring server-side aggregation cost accounting.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from .aggregation import AggregatorConfig, apply_weights, compute_weights
from .attacks import AttackConfig, craft
from .objectives import TaskSpec, build_task, lr_schedule
from .projection import ProjectionSpec, build_projection
from .seeding import derive_seed

__all__ = ["RoundRecord", "TrainingSummary", "RoundState", "run_round",
           "run_training", "DivergenceError"]

# A run is declared divergent when the distance to the optimum blows past
# this multiple of its initial value, or any model entry goes non-finite.
DIVERGENCE_FACTOR = 1e6


class DivergenceError(RuntimeError):
    """Raised when a round produces a non-finite or runaway global model."""

    def __init__(self, round_index: int, reason: str):
        super().__init__(f"round {round_index}: {reason}")
        self.round_index = round_index
        self.reason = reason


@dataclass
class RoundRecord:
    """Per-round metrics; the unit of persisted experiment output."""

    t: int
    wall_time_project: float
    wall_time_aggregate: float
    wall_time_reconstruct: float
    dist_sq_to_optimum: float | None
    grad_norm_sq: float
    weights: list[float]
    byzantine_weight_mass: float

    TIMING_FIELDS = ("wall_time_project", "wall_time_aggregate",
                     "wall_time_reconstruct")

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "wall_time_project": self.wall_time_project,
            "wall_time_aggregate": self.wall_time_aggregate,
            "wall_time_reconstruct": self.wall_time_reconstruct,
            "dist_sq_to_optimum": self.dist_sq_to_optimum,
            "grad_norm_sq": self.grad_norm_sq,
            "weights": self.weights,
            "byzantine_weight_mass": self.byzantine_weight_mass,
        }


@dataclass
class TrainingSummary:
    rounds_completed: int
    aborted: bool
    abort_round: int | None
    abort_reason: str | None
    final_dist_sq: float | None
    min_grad_norm_sq: float | None
    mean_wall_time_project: float
    mean_wall_time_aggregate: float
    mean_wall_time_reconstruct: float

    def to_dict(self) -> dict:
        return self.__dict__.copy()


@dataclass
class RoundState:
    """Mutable driver state threaded through run_round."""

    task_spec: TaskSpec
    projection: ProjectionSpec
    aggregator: AggregatorConfig
    attack: AttackConfig
    schedule: str
    rounds: int
    master_seed: int
    byzantine_clients: frozenset[int]
    fixed_projection: bool = False
    t: int = 0
    w: np.ndarray | None = None
    task: object = field(default=None, repr=False)
    initial_dist_sq: float | None = None

    def __post_init__(self):
        if self.task is None:
            self.task = build_task(self.task_spec)
        if self.w is None:
            self.w = np.zeros(self.task_spec.p)
        if self.projection.k_override is None and self.projection.rounds is None:
            # per-round matrices share the failure budget via a union bound
            self.projection = dataclasses.replace(self.projection,
                                                  rounds=self.rounds)
        self.aggregator.validate_for(self.task_spec.n_clients)
        bad = [m for m in self.byzantine_clients
               if not 0 <= m < self.task_spec.n_clients]
        if bad:
            raise ValueError(f"byzantine client ids out of range: {bad}")
        if self.initial_dist_sq is None and self.task_spec.task_kind == "quadratic":
            gap = self.w - self.task.global_optimum()
            self.initial_dist_sq = float(gap @ gap)


def _learning_rate(state: RoundState) -> float:
    task = state.task
    mu = None
    if state.schedule == "decaying_strongly_convex":
        mu = task.strong_convexity
    return lr_schedule(state.schedule, task.lipschitz, mu, state.rounds, state.t)


def _collect_updates(state: RoundState) -> np.ndarray:
    """All M client updates for this round, byzantine rows included."""
    spec = state.task_spec
    honest = [m for m in range(spec.n_clients) if m not in state.byzantine_clients]
    updates = np.empty((spec.n_clients, spec.p))
    for m in honest:
        updates[m] = state.task.client_gradient(
            m, state.w, round_index=state.t, stochastic=spec.noise_sigma > 0)
    if state.byzantine_clients:
        round_seed = derive_seed(state.master_seed, "attack-round", state.t)
        crafted = craft(state.attack, updates[honest],
                        len(state.byzantine_clients), round_seed)
        for row, m in zip(crafted, sorted(state.byzantine_clients)):
            updates[m] = row
    return updates


def run_round(state: RoundState) -> tuple[RoundState, RoundRecord]:
    """Execute one communication round, returning the advanced state.

    Raises DivergenceError when the updated model is non-finite or the
    distance to the optimum exceeds DIVERGENCE_FACTOR times its initial
    value, matching the non-convergence bookkeeping of the harness.
    """
    spec = state.task_spec
    updates = _collect_updates(state)

    proj_seed_round = 0 if state.fixed_projection else state.t
    proj_seed = derive_seed(state.master_seed, "projection", proj_seed_round)
    t0 = time.perf_counter()
    matrix = build_projection(state.projection, spec.p, proj_seed,
                              n_vectors=spec.n_clients)
    projected = matrix.project_batch(updates)
    t1 = time.perf_counter()
    weights = compute_weights(state.aggregator, projected,
                              sample_counts=state.task.sample_counts)
    t2 = time.perf_counter()
    aggregate = apply_weights(weights, updates)
    t3 = time.perf_counter()

    eta = _learning_rate(state)
    w_next = state.w - eta * aggregate

    byz = sorted(state.byzantine_clients)
    record = RoundRecord(
        t=state.t,
        wall_time_project=t1 - t0,
        wall_time_aggregate=t2 - t1,
        wall_time_reconstruct=t3 - t2,
        dist_sq_to_optimum=None,
        grad_norm_sq=0.0,
        weights=[float(x) for x in weights],
        byzantine_weight_mass=float(weights[byz].sum()) if byz else 0.0,
    )

    if not np.all(np.isfinite(w_next)):
        raise DivergenceError(state.t, "model contains non-finite values")

    grad = state.task.global_gradient(w_next)
    record.grad_norm_sq = float(grad @ grad)
    if spec.task_kind == "quadratic":
        gap = w_next - state.task.global_optimum()
        record.dist_sq_to_optimum = float(gap @ gap)
        if (state.initial_dist_sq is not None and state.initial_dist_sq > 0
                and record.dist_sq_to_optimum > DIVERGENCE_FACTOR * state.initial_dist_sq):
            raise DivergenceError(
                state.t, "distance to optimum diverged beyond "
                f"{DIVERGENCE_FACTOR:g} x initial")

    state.w = w_next
    state.t += 1
    return state, record


def run_training(state: RoundState) -> tuple[list[RoundRecord], TrainingSummary]:
    """Run the configured number of rounds, tolerating divergence aborts.

    Aborts are recorded in the summary rather than raised, mirroring the
    "-" non-convergence reporting convention.
    """
    records: list[RoundRecord] = []
    abort_round = None
    abort_reason = None
    for _ in range(state.rounds):
        try:
            state, record = run_round(state)
        except DivergenceError as err:
            abort_round = err.round_index
            abort_reason = err.reason
            break
        records.append(record)

    final_dist = records[-1].dist_sq_to_optimum if records else None
    summary = TrainingSummary(
        rounds_completed=len(records),
        aborted=abort_round is not None,
        abort_round=abort_round,
        abort_reason=abort_reason,
        final_dist_sq=final_dist,
        min_grad_norm_sq=min((r.grad_norm_sq for r in records), default=None),
        mean_wall_time_project=float(np.mean([r.wall_time_project for r in records])) if records else 0.0,
        mean_wall_time_aggregate=float(np.mean([r.wall_time_aggregate for r in records])) if records else 0.0,
        mean_wall_time_reconstruct=float(np.mean([r.wall_time_reconstruct for r in records])) if records else 0.0,
    )
    return records, summary
