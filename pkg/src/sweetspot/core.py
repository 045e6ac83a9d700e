"""Reward-mode agnostic sweet-spot math.

A trajectory is scored in three stages: per-step proximities are averaged
into a trajectory proximity ``S``, ``S`` is mapped onto a tier score by a
:class:`ZoneSchema`, and the tier is combined with the verifier bit ``C``
into the final reward ``R = C + alpha * S_hat``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .errors import InvalidInputError

__all__ = [
    "ZoneSchema",
    "StepRecord",
    "Trajectory",
    "RewardMode",
    "RewardConfig",
    "RewardRecord",
    "aggregate_proximity",
    "discretize",
    "compose_reward",
    "default_schema",
    "uniform_schema",
    "schema_for_k",
    "ZONE_PRESETS",
]


@dataclass(frozen=True)
class ZoneSchema:
    """Ordered zone boundaries ``1 = b_0 > b_1 > ... > b_K = 0`` and tier scores.

    Zone ``k`` (1-based) is the half-open band ``[b_k, b_{k-1})``; the top
    zone is closed at 1. ``scores[k-1]`` is the tier assigned to zone ``k``.

    With ``zero_is_miss`` set, a proximity of exactly 0 maps to a tier of 0
    instead of the lowest score. GUI grounding uses this so that points
    outside the target box score 0.
    """

    boundaries: tuple[float, ...]
    scores: tuple[float, ...]
    zero_is_miss: bool = False

    def __post_init__(self):
        b = tuple(float(v) for v in self.boundaries)
        s = tuple(float(v) for v in self.scores)
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "scores", s)
        if len(s) < 1 or len(b) != len(s) + 1:
            raise InvalidInputError(
                f"need K >= 1 scores and K + 1 boundaries, got {len(s)} and {len(b)}")
        if b[0] != 1.0 or b[-1] != 0.0:
            raise InvalidInputError("boundaries must start at 1 and end at 0")
        if any(hi <= lo for hi, lo in zip(b, b[1:])):
            raise InvalidInputError("boundaries must be strictly decreasing")
        if any(not 0.0 <= v <= 1.0 for v in s):
            raise InvalidInputError("scores must lie in [0, 1]")
        if any(hi <= lo for hi, lo in zip(s, s[1:])):
            raise InvalidInputError("scores must be strictly decreasing")

    @property
    def K(self) -> int:
        return len(self.scores)

    def zone_index(self, S: float) -> int:
        """1-based index of the zone containing ``S``."""
        for k in range(1, self.K + 1):
            if S >= self.boundaries[k]:
                return k
        return self.K  # unreachable, b_K = 0

    def self_consistent(self) -> bool:
        """True if every score lies inside its own zone (makes discretization idempotent)."""
        return all(self.zone_index(s) == k for k, s in enumerate(self.scores, start=1))


def uniform_schema(K: int) -> ZoneSchema:
    """``K`` equal-width zones, each scored by its upper boundary."""
    if K < 1:
        raise InvalidInputError("K must be >= 1")
    b = tuple(1.0 - k / K for k in range(K + 1))
    return ZoneSchema(b, b[:-1])


def default_schema() -> ZoneSchema:
    return uniform_schema(4)


ZONE_PRESETS = {2: uniform_schema(2), 4: uniform_schema(4), 8: uniform_schema(8)}


def schema_for_k(K: int) -> ZoneSchema:
    try:
        return ZONE_PRESETS[K]
    except KeyError:
        raise InvalidInputError(
            f"no zone preset for K={K}; available: {sorted(ZONE_PRESETS)}") from None


@dataclass(frozen=True)
class StepRecord:
    proximity: float
    kind: str = "symbolic"  # "grounding" | "symbolic", provenance only

    def __post_init__(self):
        if not 0.0 <= self.proximity <= 1.0:
            raise InvalidInputError(f"proximity {self.proximity} outside [0, 1]")


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[StepRecord, ...]
    correct: int

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise InvalidInputError("trajectory needs at least one step")
        if self.correct not in (0, 1):
            raise InvalidInputError("correct must be 0 or 1")


class RewardMode(str, Enum):
    BINARY = "binary"
    CONTINUOUS = "continuous"
    SSL = "ssl"


@dataclass(frozen=True)
class RewardConfig:
    """Reward mode, bonus weight ``alpha`` and zone schema.

    ``schema=None`` means the trajectory proximity is already tiered and is
    used as ``S_hat`` unchanged (grid tasks).
    """

    mode: RewardMode = RewardMode.SSL
    alpha: float = 0.2
    schema: ZoneSchema | None = field(default_factory=default_schema)

    def __post_init__(self):
        object.__setattr__(self, "mode", RewardMode(self.mode))
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise InvalidInputError(f"alpha must be a positive finite number, got {self.alpha}")


@dataclass(frozen=True)
class RewardRecord:
    C: int
    S_raw: float
    S_hat: float
    R: float


def aggregate_proximity(steps: Sequence[StepRecord | float]) -> float:
    """Mean step proximity over the ``T + 1`` steps of a trajectory."""
    if len(steps) == 0:
        raise InvalidInputError("cannot aggregate an empty step list")
    vals = [s.proximity if isinstance(s, StepRecord) else float(s) for s in steps]
    if any(not 0.0 <= v <= 1.0 for v in vals):
        raise InvalidInputError("step proximities must lie in [0, 1]")
    # fsum keeps constant sequences exact
    return min(1.0, math.fsum(vals) / len(vals))


def discretize(S: float, schema: ZoneSchema) -> float:
    """Map a trajectory proximity onto its zone's tier score."""
    if not 0.0 <= S <= 1.0:
        raise InvalidInputError(f"S={S} outside [0, 1]")
    if schema.zero_is_miss and S == 0.0:
        return 0.0
    return schema.scores[schema.zone_index(S) - 1]


def compose_reward(C: int, S_raw: float, config: RewardConfig) -> RewardRecord:
    if C not in (0, 1):
        raise InvalidInputError("C must be 0 or 1")
    if not 0.0 <= S_raw <= 1.0:
        raise InvalidInputError(f"S_raw={S_raw} outside [0, 1]")
    C = int(C)
    S_raw = float(S_raw)
    if config.mode is RewardMode.BINARY:
        return RewardRecord(C, S_raw, 0.0, float(C))
    if config.mode is RewardMode.CONTINUOUS:
        return RewardRecord(C, S_raw, 0.0, S_raw)
    S_hat = S_raw if config.schema is None else discretize(S_raw, config.schema)
    return RewardRecord(C, S_raw, S_hat, C + config.alpha * S_hat)
