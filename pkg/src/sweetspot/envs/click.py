"""2-D click policy: an axis-aligned Gaussian over screen pixels."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from ..core import StepRecord, Trajectory
from ..errors import InvalidInputError
from ..gui import BoundingBox, FieldParams, Point, field_value, grounding_verify
from .rollout import Rollout, rollout_rng

__all__ = [
    "DEFAULT_SCREEN",
    "ClickPolicy",
    "ClickPayload",
    "OffsetSummary",
    "rollout_click",
    "offset_stats",
    "offset_stats_from_points",
    "click_task",
]

DEFAULT_SCREEN = BoundingBox(0.0, 0.0, 200.0, 120.0)
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


class ClickPolicy:
    """Axis-aligned Gaussian click distribution.

    The parameter vector is ``(mean_x / unit, mean_y / unit, log_std_x,
    log_std_y)``. Measuring the mean in units of ``unit`` pixels (default:
    the 20 px starting spread) gives both parameter groups gradients of the
    same order, so a single plain step size works for both.
    """

    def __init__(self, mean, log_std, screen: BoundingBox = DEFAULT_SCREEN, unit: float = 20.0):
        self.mean = np.array(mean, dtype=float).reshape(2)
        self.log_std = np.array(log_std, dtype=float).reshape(2)
        if not (np.isfinite(self.mean).all() and np.isfinite(self.log_std).all()):
            raise InvalidInputError("click policy parameters must be finite")
        if not unit > 0:
            raise InvalidInputError("unit must be positive")
        self.std = np.exp(self.log_std)
        if not (self.std > 0).all() or not np.isfinite(self.std).all():
            raise InvalidInputError("click policy spread under- or overflowed")
        self.screen = screen
        self.unit = float(unit)

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.mean / self.unit, self.log_std])

    def with_params(self, theta) -> "ClickPolicy":
        theta = np.asarray(theta, dtype=float)
        return ClickPolicy(theta[:2] * self.unit, theta[2:], self.screen, self.unit)

    def _log_density(self, z) -> float:
        u = (np.asarray(z) - self.mean) / self.std
        return float(np.sum(-0.5 * u * u - self.log_std - _LOG_SQRT_2PI))

    def log_prob(self, rollout: Rollout) -> float:
        return self._log_density(rollout.payload.sample)

    def score(self, rollout: Rollout) -> np.ndarray:
        u = (np.asarray(rollout.payload.sample) - self.mean) / self.std
        return np.concatenate([u * self.unit / self.std, u * u - 1.0])

    def step_log_probs(self, rollout: Rollout) -> np.ndarray:
        return np.array([self.log_prob(rollout)])

    def step_scores(self, rollout: Rollout) -> np.ndarray:
        return self.score(rollout)[None, :]

    def clamp(self, z) -> Point:
        s = self.screen
        return Point(float(min(max(z[0], s.x1), s.x2)), float(min(max(z[1], s.y1), s.y2)))

    def success_probability(self, target: BoundingBox) -> float:
        """Exact P(clamped click lands in ``target``)."""
        s = self.screen
        p = 1.0
        for lo, hi, slo, shi, m, sd in ((target.x1, target.x2, s.x1, s.x2, self.mean[0], self.std[0]),
                                        (target.y1, target.y2, s.y1, s.y2, self.mean[1], self.std[1])):
            # clamping piles the mass beyond a screen edge onto that edge
            a = -np.inf if lo <= slo else (lo - m) / sd
            b = np.inf if hi >= shi else (hi - m) / sd
            if hi < slo or lo > shi:
                return 0.0
            p *= float(ndtr(b) - ndtr(a))
        return p

    def kl(self, other: "ClickPolicy", target=None) -> float:
        """KL(self || other) between the unclamped Gaussians."""
        var_ratio = (self.std / other.std) ** 2
        d = (self.mean - other.mean) / other.std
        return float(max(0.0, np.sum(0.5 * (var_ratio + d * d - 1.0) - (self.log_std - other.log_std))))


@dataclass(frozen=True)
class ClickPayload:
    sample: tuple[float, float]  # pre-clamp draw
    point: Point  # emitted (clamped) click
    target: BoundingBox


def rollout_click(policy: ClickPolicy, target: BoundingBox, rng: np.random.Generator,
                  params: FieldParams = FieldParams()) -> Rollout:
    eps = rng.standard_normal(2)
    z = policy.mean + policy.std * eps
    p = policy.clamp(z)
    phi = field_value(p, target, params)
    C = grounding_verify(p, target)
    payload = ClickPayload((float(z[0]), float(z[1])), p, target)
    rollout = Rollout(
        trajectory=Trajectory((StepRecord(phi, "grounding"),), C),
        raw_score=phi,
        dense_score=phi,
        correct=C,
        log_prob=0.0,
        score_gradient=np.empty(0),
        payload=payload,
    )
    object.__setattr__(rollout, "log_prob", policy.log_prob(rollout))
    object.__setattr__(rollout, "score_gradient", policy.score(rollout))
    return rollout


def click_task(seed: int, screen: BoundingBox = DEFAULT_SCREEN) -> tuple[BoundingBox, ClickPolicy]:
    """Seeded target box and a broad initial policy that starts off-target.

    The target is 24-40 px wide and 12-20 px tall; the initial mean sits
    0.5-1 box widths away from its centre with a 20 px spread.
    """
    rng = rollout_rng(seed, 7919)
    w, h = rng.uniform(24, 40), rng.uniform(12, 20)
    cx = rng.uniform(screen.x1 + 60, screen.x2 - 60)
    cy = rng.uniform(screen.y1 + 30, screen.y2 - 30)
    target = BoundingBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
    angle = rng.uniform(0, 2 * math.pi)
    dist = rng.uniform(0.5, 1.0) * w
    mean = (cx + dist * math.cos(angle), cy + 0.5 * dist * math.sin(angle))
    mean = (min(max(mean[0], screen.x1), screen.x2), min(max(mean[1], screen.y1), screen.y2))
    return target, ClickPolicy(mean, (math.log(20.0), math.log(20.0)), screen)


@dataclass(frozen=True)
class OffsetSummary:
    offsets: np.ndarray  # (n, 2) point minus box centre
    mean_offset: np.ndarray
    mean_norm: float
    covariance: np.ndarray
    hist: np.ndarray
    x_edges: np.ndarray
    y_edges: np.ndarray


def offset_stats(rollouts: Sequence[Rollout], targets=None, bins: int = 21,
                 extent: float | None = None) -> OffsetSummary:
    """Click offsets from the target centre, their spread, and a 2-D histogram.

    ``targets`` may be one box, one box per rollout, or None to use each
    rollout's own target.
    """
    if not rollouts:
        raise InvalidInputError("no rollouts")
    if isinstance(targets, BoundingBox) or targets is None:
        targets = [targets] * len(rollouts)
    if len(targets) != len(rollouts):
        raise InvalidInputError("need one target per rollout")
    pairs = []
    for r, t in zip(rollouts, targets):
        if not isinstance(r.payload, ClickPayload):
            raise InvalidInputError("offset statistics need click rollouts")
        pairs.append((r.payload.point, t or r.payload.target))
    return offset_stats_from_points(pairs, bins, extent)


def offset_stats_from_points(pairs: Sequence[tuple[Point, BoundingBox]], bins: int = 21,
                             extent: float | None = None) -> OffsetSummary:
    """Same summary as :func:`offset_stats` for ``(point, target)`` pairs."""
    if not pairs:
        raise InvalidInputError("no clicks")
    offs = np.array([(p.x - t.center[0], p.y - t.center[1]) for p, t in pairs], dtype=float)
    norms = np.hypot(offs[:, 0], offs[:, 1])
    cov = np.cov(offs.T) if len(offs) > 1 else np.zeros((2, 2))
    if extent is None:
        extent = max(float(np.abs(offs).max()), 1e-9)
    edges = np.linspace(-extent, extent, bins + 1)
    hist, xe, ye = np.histogram2d(offs[:, 0], offs[:, 1], bins=[edges, edges])
    return OffsetSummary(offs, offs.mean(axis=0), float(norms.mean()), cov, hist, xe, ye)
