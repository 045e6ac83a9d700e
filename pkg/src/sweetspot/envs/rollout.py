"""Rollout record shared by the desk-scale environments."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from ..core import Trajectory

# spawn-key slot reserved for non-rollout streams (task sampling, evaluation)
AUX_STREAM = 2 ** 31


def rollout_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``; equal keys give equal streams."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


@dataclass(frozen=True, eq=False)
class Rollout:
    """One sampled trajectory with its scores and score-function gradient.

    ``raw_score`` is the trajectory proximity fed to the sweet-spot tiers;
    ``dense_score`` is the un-tiered proximity used by the continuous
    baseline (identical to ``raw_score`` for clicks, cell-match fraction for
    mazes).
    """

    trajectory: Trajectory
    raw_score: float
    dense_score: float
    correct: int
    log_prob: float
    score_gradient: np.ndarray
    payload: Any

    def same_as(self, other: "Rollout") -> bool:
        return (self.trajectory == other.trajectory
                and self.raw_score == other.raw_score
                and self.dense_score == other.dense_score
                and self.correct == other.correct
                and self.log_prob == other.log_prob
                and np.array_equal(self.score_gradient, other.score_gradient)
                and self.payload == other.payload)
