"""Experiment orchestration: runs, speedup benchmarks and parameter sweeps.

Outputs are deliberately plain: one JSON object per round per repeat in
records.jsonl, aggregate statistics in summary.json, sweep tables as CSV.
Identical configs and seeds produce byte-identical records up to the wall
time fields.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aggregation import AggregatorConfig, apply_weights, compute_weights
from .config import ConfigError, ExperimentConfig
from .engine import RoundState, run_training
from .projection import ProjectionSpec, build_projection
from .seeding import derive_seed, generator
from .validation import as_sample_counts

__all__ = ["select_byzantine_clients", "run_experiment", "run_benchmark",
           "run_sweep", "ExperimentResult", "load_benchmark_grid"]

SWEEP_AXES = ("b", "attack", "aggregator", "k", "s")

# Benchmark cells whose timing spread exceeds this coefficient of variation
# are flagged unstable instead of trusted for speedup ratios.
UNSTABLE_CV = 0.3


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records_path: Path
    summary_path: Path
    summary: dict
    any_aborted: bool


def select_byzantine_clients(config: ExperimentConfig, repeat_seed: int) -> list[int]:
    """Data-weighted byzantine set: the largest prefix of a seeded client
    permutation whose sample mass stays within ratio * total."""
    spec = config.task
    counts = as_sample_counts(spec.sample_counts, spec.n_clients)
    budget = config.byzantine_ratio * counts.sum()
    order = generator(repeat_seed, "byzantine-set").permutation(spec.n_clients)
    chosen: list[int] = []
    mass = 0.0
    for client in order:
        if mass + counts[client] > budget:
            break
        chosen.append(int(client))
        mass += counts[client]
    return sorted(chosen)


def _round_state(config: ExperimentConfig, repeat: int) -> RoundState:
    repeat_seed = derive_seed(config.master_seed, "repeat", repeat)
    byz = select_byzantine_clients(config, repeat_seed)
    task_spec = config.task
    attack = config.attack
    return RoundState(
        task_spec=task_spec,
        projection=config.projection,
        aggregator=config.aggregator,
        attack=attack,
        schedule=config.schedule,
        rounds=config.rounds,
        master_seed=repeat_seed,
        byzantine_clients=frozenset(byz),
        fixed_projection=config.fixed_projection,
    )


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None
                   ) -> ExperimentResult:
    """Run all repeats, appending records.jsonl and writing summary.json.

    A diverging repeat is recorded (abort round and reason in the summary)
    and the remaining repeats still run.
    """
    out = Path(out_dir) if out_dir is not None else Path(config.output_path)
    out.mkdir(parents=True, exist_ok=True)
    records_path = out / "records.jsonl"
    summary_path = out / "summary.json"

    per_repeat = []
    any_aborted = False
    with records_path.open("w") as sink:
        for repeat in range(config.repeats):
            state = _round_state(config, repeat)
            records, summary = run_training(state)
            any_aborted = any_aborted or summary.aborted
            for record in records:
                line = {"repeat": repeat}
                line.update(record.to_dict())
                json.dump(line, sink, sort_keys=True)
                sink.write("\n")
            entry = {"repeat": repeat,
                     "byzantine_clients": sorted(state.byzantine_clients)}
            entry.update(summary.to_dict())
            entry["byzantine_weight_mass_trajectory"] = [
                r.byzantine_weight_mass for r in records]
            per_repeat.append(entry)

    finals = [r["final_dist_sq"] for r in per_repeat
              if r["final_dist_sq"] is not None]
    grads = [r["min_grad_norm_sq"] for r in per_repeat
             if r["rounds_completed"] > 0]
    summary = {
        "config": config.to_dict(),
        "repeats": per_repeat,
        "aggregate": {
            "final_dist_sq_mean": float(np.mean(finals)) if finals else None,
            "final_dist_sq_std": float(np.std(finals)) if finals else None,
            "min_grad_norm_sq_mean": float(np.mean(grads)) if grads else None,
            "aborted_repeats": sum(r["aborted"] for r in per_repeat),
            "mean_wall_time_project": float(np.mean(
                [r["mean_wall_time_project"] for r in per_repeat])),
            "mean_wall_time_aggregate": float(np.mean(
                [r["mean_wall_time_aggregate"] for r in per_repeat])),
            "mean_wall_time_reconstruct": float(np.mean(
                [r["mean_wall_time_reconstruct"] for r in per_repeat])),
        },
    }
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return ExperimentResult(config=config, records_path=records_path,
                            summary_path=summary_path, summary=summary,
                            any_aborted=any_aborted)


# ---------------------------------------------------------------------------
# Speedup benchmark
# ---------------------------------------------------------------------------

@dataclass
class BenchmarkCell:
    p: int
    n_clients: int
    k: int
    sparsity: int
    aggregator: str

    def __post_init__(self):
        if min(self.p, self.n_clients, self.k, self.sparsity) < 1:
            raise ConfigError("benchmark cell dimensions must be positive")
        if self.aggregator not in ("mean", "krum", "bulyan_select",
                                   "geometric_median"):
            raise ConfigError(f"unknown aggregator {self.aggregator!r}")


def load_benchmark_grid(path: str | Path) -> list[BenchmarkCell]:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as err:
        raise ConfigError(f"cannot read grid {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"grid {path} is not valid JSON: {err.msg}") from err
    if not isinstance(raw, list) or not raw:
        raise ConfigError("benchmark grid must be a non-empty JSON list")
    cells = []
    for i, item in enumerate(raw):
        try:
            cells.append(BenchmarkCell(
                p=item["p"], n_clients=item["M"], k=item["k"],
                sparsity=item.get("s", 8), aggregator=item["aggregator"]))
        except (KeyError, TypeError) as err:
            raise ConfigError(f"grid cell {i} malformed: {err}") from err
    return cells


def _aggregator_config(kind: str, n_clients: int,
                       weiszfeld_iters: int = 50) -> AggregatorConfig:
    f = max(1, int(0.2 * n_clients)) if kind in ("krum", "bulyan_select") else 0
    return AggregatorConfig(kind=kind, assumed_byzantine=f,
                            weiszfeld_max_iters=weiszfeld_iters,
                            weiszfeld_tol=0.0, weight_by_samples=False)


def _timed(fn, repeats: int) -> tuple[float, float, list[float]]:
    fn()  # warm-up, excluded
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.mean(times)), float(np.std(times)), times


def benchmark_cell(cell: BenchmarkCell, repeats: int = 5, seed: int = 0,
                   weiszfeld_iters: int = 50) -> dict:
    """Time full-dimensional aggregation against the projected pipeline.

    Both variants see identical synthetic inputs. The projected variant
    times projection + low-dimensional weights + full-dimensional
    reconstruction; the projection matrix is built once outside the timed
    region (matching per-matrix amortized accounting; building it costs
    O(k p) draws and is reported separately).
    """
    if repeats < 5:
        raise ConfigError("benchmark repeats must be >= 5")
    rng = generator(seed, "benchmark", cell.p, cell.n_clients, cell.k)
    X = rng.standard_normal((cell.n_clients, cell.p))
    agg = _aggregator_config(cell.aggregator, cell.n_clients, weiszfeld_iters)

    t0 = time.perf_counter()
    spec = ProjectionSpec(sparsity=cell.sparsity, k_override=cell.k)
    matrix = build_projection(spec, cell.p, derive_seed(seed, "bench-proj"),
                              n_vectors=cell.n_clients)
    build_time = time.perf_counter() - t0

    def full_dim():
        weights = compute_weights(agg, X)
        return apply_weights(weights, X)

    def projected():
        low = matrix.project_batch(X)
        weights = compute_weights(agg, low)
        return apply_weights(weights, X)

    full_mean, full_std, full_times = _timed(full_dim, repeats)
    proj_mean, proj_std, proj_times = _timed(projected, repeats)

    def cv(mean, std):
        return std / mean if mean > 0 else 0.0

    unstable = (cv(full_mean, full_std) > UNSTABLE_CV
                or cv(proj_mean, proj_std) > UNSTABLE_CV)
    return {
        "p": cell.p, "M": cell.n_clients, "k": cell.k, "s": cell.sparsity,
        "aggregator": cell.aggregator,
        "full_mean_s": full_mean, "full_std_s": full_std,
        "projected_mean_s": proj_mean, "projected_std_s": proj_std,
        "matrix_build_s": build_time,
        "speedup": full_mean / proj_mean if not unstable else None,
        "unstable": unstable,
        "full_times": full_times, "projected_times": proj_times,
    }


def _slope_fits(results: list[dict]) -> list[dict]:
    """log-time vs log-p slopes per (M, k, s, aggregator, variant) group."""
    groups: dict[tuple, list[dict]] = {}
    for res in results:
        groups.setdefault((res["M"], res["k"], res["s"], res["aggregator"]),
                          []).append(res)
    fits = []
    for key, cells in groups.items():
        if len({c["p"] for c in cells}) < 2:
            continue
        cells = sorted(cells, key=lambda c: c["p"])
        logp = np.log([c["p"] for c in cells])
        for variant, field_name in (("full", "full_mean_s"),
                                    ("projected", "projected_mean_s")):
            slope = float(np.polyfit(logp, np.log([c[field_name] for c in cells]), 1)[0])
            fits.append({"M": key[0], "k": key[1], "s": key[2],
                         "aggregator": key[3], "variant": variant,
                         "log_log_slope": slope})
    return fits


def run_benchmark(cells: list[BenchmarkCell], repeats: int = 5, seed: int = 0,
                  out_dir: str | Path = "out") -> dict:
    """Benchmark every cell strictly sequentially and write report.json."""
    results = [benchmark_cell(cell, repeats=repeats, seed=seed) for cell in cells]
    report = {"repeats": repeats, "cells": results,
              "slope_fits": _slope_fits(results)}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "benchmark.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _override(config_dict: dict, axis: str, value):
    raw = json.loads(json.dumps(config_dict))  # deep copy
    if axis == "b":
        raw["byzantine_ratio"] = float(value)
    elif axis == "attack":
        raw.setdefault("attack", {})["kind"] = str(value)
    elif axis == "aggregator":
        raw.setdefault("aggregator", {})["kind"] = str(value)
    elif axis == "k":
        raw.setdefault("projection", {})["k_override"] = int(value)
        raw["projection"].pop("rounds", None)
    elif axis == "s":
        raw.setdefault("projection", {})["sparsity"] = int(value)
    else:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    return raw


def run_sweep(config: ExperimentConfig, axis: str, values: list,
              out_dir: str | Path = "out") -> Path:
    """Run one experiment per axis value; emit one CSV row per value."""
    from .config import from_dict

    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"sweep_{axis}.csv"

    fieldnames = ["axis", "value", "final_dist_sq_mean", "final_dist_sq_std",
                  "min_grad_norm_sq_mean", "aborted_repeats",
                  "mean_wall_time_project", "mean_wall_time_aggregate",
                  "mean_wall_time_reconstruct"]
    with csv_path.open("w", newline="") as sink:
        writer = csv.DictWriter(sink, fieldnames=fieldnames)
        writer.writeheader()
        for value in values:
            cfg = from_dict(_override(config.to_dict(), axis, value))
            result = run_experiment(cfg, out_dir=out / f"{axis}_{value}")
            agg = result.summary["aggregate"]
            row = {"axis": axis, "value": value}
            row.update({k: agg[k] for k in fieldnames[2:]})
            writer.writerow(row)
    return csv_path
