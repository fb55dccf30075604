"""Byzantine update crafting under four standard threat models.

Attackers are omniscient: the informed attacks (sign_flip, lie, foe) read the
true benign updates of the current round and are deterministic functions of
them. The gaussian attack ignores the benign set and draws noise from
per-(round, attacker) counter-based streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeding import generator
from .validation import as_update_matrix

__all__ = ["AttackConfig", "craft"]

ATTACK_KINDS = ("none", "gaussian", "sign_flip", "lie", "foe")


@dataclass
class AttackConfig:
    """Threat-model selection and constants.

    Defaults follow the usual benchmarks: noise variance 90, sign-flip
    scale -3 applied to the benign sum, LIE offset c = 0.7 standard
    deviations, FoE factor q = -0.1 of the benign mean.
    """

    kind: str = "none"
    gaussian_variance: float = 90.0
    sign_flip_scale: float = -3.0
    lie_c: float = 0.7
    foe_q: float = -0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"kind must be one of {ATTACK_KINDS}, got {self.kind!r}")
        if self.gaussian_variance <= 0:
            raise ValueError("gaussian_variance must be positive")


def craft(config: AttackConfig, benign_updates, byzantine_count: int,
          round_seed: int) -> np.ndarray:
    """Produce the byzantine update matrix for one round.

    Informed attacks send identical copies to every attacker; gaussian
    attackers draw independently. Returns a (byzantine_count, p) array.
    """
    if byzantine_count < 0:
        raise ValueError("byzantine_count must be >= 0")
    benign = as_update_matrix(benign_updates)
    if byzantine_count == 0:
        return np.empty((0, benign.shape[1]))
    if config.kind == "none":
        raise ValueError("attack kind 'none' cannot craft byzantine updates")
    p = benign.shape[1]

    if config.kind == "gaussian":
        std = np.sqrt(config.gaussian_variance)
        out = np.empty((byzantine_count, p))
        for i in range(byzantine_count):
            rng = generator(config.seed, "attack", round_seed, i)
            out[i] = std * rng.standard_normal(p)
        return out

    if config.kind == "sign_flip":
        vector = config.sign_flip_scale * benign.sum(axis=0)
    elif config.kind == "lie":
        mean = benign.mean(axis=0)
        # population standard deviation (divisor = count)
        std = benign.std(axis=0)
        vector = mean + config.lie_c * std
    elif config.kind == "foe":
        vector = config.foe_q * benign.mean(axis=0)
    else:  # pragma: no cover - guarded by AttackConfig
        raise ValueError(f"unknown attack kind {config.kind!r}")

    return np.tile(vector, (byzantine_count, 1))
