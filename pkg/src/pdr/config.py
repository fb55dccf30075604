"""Experiment configuration: JSON loading, defaults and invariant checks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .aggregation import AggregatorConfig
from .attacks import AttackConfig
from .objectives import SCHEDULE_KINDS, TaskSpec
from .projection import ProjectionSpec

__all__ = ["ExperimentConfig", "ConfigError", "load_config"]


class ConfigError(ValueError):
    """Configuration parse or validation failure, naming the field."""


@dataclass
class ExperimentConfig:
    """Everything needed to run one experiment end to end."""

    task: TaskSpec = field(default_factory=TaskSpec)
    projection: ProjectionSpec = field(default_factory=ProjectionSpec)
    aggregator: AggregatorConfig = field(default_factory=AggregatorConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    byzantine_ratio: float = 0.0
    rounds: int = 100
    schedule: str = "decaying_strongly_convex"
    master_seed: int = 0
    repeats: int = 1
    output_path: str = "out"
    fixed_projection: bool = False

    def __post_init__(self):
        if not 0.0 <= self.byzantine_ratio < 0.5:
            raise ConfigError(
                f"byzantine_ratio must lie in [0, 0.5), got {self.byzantine_ratio}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")
        if self.schedule not in SCHEDULE_KINDS:
            raise ConfigError(
                f"schedule must be one of {SCHEDULE_KINDS}, got {self.schedule!r}")
        if (self.schedule == "decaying_strongly_convex"
                and self.task.task_kind != "quadratic"):
            raise ConfigError(
                "schedule decaying_strongly_convex requires the quadratic task")
        if self.byzantine_ratio > 0 and self.attack.kind == "none":
            raise ConfigError(
                "byzantine_ratio > 0 requires attack.kind != 'none'")

    def to_dict(self) -> dict:
        return {
            "task": dict(self.task.__dict__),
            "projection": dict(self.projection.__dict__),
            "aggregator": dict(self.aggregator.__dict__),
            "attack": dict(self.attack.__dict__),
            "byzantine_ratio": self.byzantine_ratio,
            "rounds": self.rounds,
            "schedule": self.schedule,
            "master_seed": self.master_seed,
            "repeats": self.repeats,
            "output_path": self.output_path,
            "fixed_projection": self.fixed_projection,
        }


def _build_section(name: str, cls, data: dict, defaults: dict | None = None):
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be an object, got {type(data).__name__}")
    merged = dict(defaults or {})
    merged.update(data)
    valid = set(cls.__dataclass_fields__)
    unknown = set(merged) - valid
    if unknown:
        raise ConfigError(f"unknown field(s) in {name!r}: {sorted(unknown)}")
    try:
        return cls(**merged)
    except (ValueError, TypeError) as err:
        raise ConfigError(f"invalid {name!r} section: {err}") from err


def from_dict(raw: dict) -> ExperimentConfig:
    """Build a validated config from parsed JSON, applying defaults.

    When the projection section does not pin ``rounds`` or ``k_override``,
    the union-bound variant of the embedding dimension is used with the
    experiment's round count.
    """
    if not isinstance(raw, dict):
        raise ConfigError("top-level config must be a JSON object")
    known_top = {"task", "projection", "aggregator", "attack", "byzantine_ratio",
                 "rounds", "schedule", "master_seed", "repeats", "output_path",
                 "fixed_projection"}
    unknown = set(raw) - known_top
    if unknown:
        raise ConfigError(f"unknown top-level field(s): {sorted(unknown)}")

    rounds = raw.get("rounds", 100)
    proj_raw = dict(raw.get("projection", {}))
    # fixed_projection lives alongside the matrix parameters in config files
    # but drives engine behavior, so it is hoisted out of the section.
    fixed_projection = bool(proj_raw.pop("fixed_projection",
                                         raw.get("fixed_projection", False)))
    if "rounds" not in proj_raw and "k_override" not in proj_raw:
        proj_raw["rounds"] = rounds

    task = _build_section("task", TaskSpec, raw.get("task", {}))
    projection = _build_section("projection", ProjectionSpec, proj_raw)
    aggregator = _build_section("aggregator", AggregatorConfig, raw.get("aggregator", {}))
    attack = _build_section("attack", AttackConfig, raw.get("attack", {}))

    try:
        return ExperimentConfig(
            task=task,
            projection=projection,
            aggregator=aggregator,
            attack=attack,
            byzantine_ratio=raw.get("byzantine_ratio", 0.0),
            rounds=rounds,
            schedule=raw.get("schedule", "decaying_strongly_convex"),
            master_seed=raw.get("master_seed", 0),
            repeats=raw.get("repeats", 1),
            output_path=raw.get("output_path", "out"),
            fixed_projection=fixed_projection,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as err:
        raise ConfigError(str(err)) from err


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a JSON experiment config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(
            f"config {path} is not valid JSON (line {err.lineno}, "
            f"column {err.colno}): {err.msg}") from err
    return from_dict(raw)
