"""Group Relative Policy Optimization with a pluggable reward mode.

Policies are duck-typed: they expose ``params``, ``with_params(theta)``,
``log_prob(rollout)`` and ``score(rollout)`` (the gradient of ``log_prob``),
plus ``success_probability(task, ...)`` and ``kl(other, task, ...)`` for
exact evaluation.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .core import RewardConfig, RewardMode, RewardRecord, compose_reward
from .envs import ClickPolicy, MazePolicy, Rollout, rollout_click, rollout_maze, rollout_rng
from .envs.rollout import AUX_STREAM
from .errors import InvalidInputError, NumericError

__all__ = [
    "GrpoConfig",
    "ENV_PRESETS",
    "preset_config",
    "default_reward_config",
    "GroupBatch",
    "MetricsRow",
    "TrainingMetrics",
    "METRICS_HEADER",
    "group_advantages",
    "grpo_surrogate",
    "grpo_gradient",
    "score_rollout",
    "Env",
    "make_env",
    "train",
    "write_metrics_csv",
]

# Per-env experiment settings. The maze preset relaxes the KL weight: at
# 0.1 the penalty for a committed move (0.1 * log 4 per step) outweighs the
# whole range the shaped bonus can span, and nothing is ever learned.
ENV_PRESETS = {
    "maze": {"learning_rate": 1000.0, "kl_coeff": 0.001, "iterations": 500},
    "click": {"learning_rate": 0.05, "kl_coeff": 0.1, "iterations": 300},
}
DEFAULT_LR = {k: v["learning_rate"] for k, v in ENV_PRESETS.items()}


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 8
    clip_eps: float = 0.2
    kl_coeff: float = 0.1
    learning_rate: float | None = None  # None: per-env default
    iterations: int = 200
    seed: int = 0
    max_steps: int | None = None  # maze episode cap, None: H * W

    def __post_init__(self):
        if self.group_size < 2:
            raise InvalidInputError("group_size must be >= 2")
        if not 0 < self.clip_eps < 1:
            raise InvalidInputError("clip_eps must lie in (0, 1)")
        if self.kl_coeff < 0:
            raise InvalidInputError("kl_coeff must be >= 0")
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be positive")
        if self.iterations < 0:
            raise InvalidInputError("iterations must be >= 0")


def preset_config(env_kind: str, **overrides) -> GrpoConfig:
    """GrpoConfig with the env's tuned step size, KL weight and length."""
    if env_kind not in ENV_PRESETS:
        raise InvalidInputError(f"unknown env kind {env_kind!r}")
    return GrpoConfig(**{**ENV_PRESETS[env_kind], **overrides})


def default_reward_config(env_kind: str, mode="ssl", alpha: float = 0.2,
                          zones: int | None = None) -> RewardConfig:
    """Reward config with the env's natural zone schema.

    Clicks are tiered on the sigma-level contours of the field; maze scores
    are already block tiers and pass through unchanged. ``zones`` swaps in
    the uniform K-zone preset instead (outside-the-box clicks still score 0).
    """
    from .core import schema_for_k
    from .gui import sigma_level_schema
    if env_kind not in ENV_PRESETS:
        raise InvalidInputError(f"unknown env kind {env_kind!r}")
    if zones is not None:
        schema = schema_for_k(zones)
        if env_kind == "click":
            schema = replace(schema, zero_is_miss=True)
    else:
        schema = sigma_level_schema() if env_kind == "click" else None
    return RewardConfig(mode=RewardMode(mode), alpha=alpha, schema=schema)


@dataclass(frozen=True)
class GroupBatch:
    rollouts: tuple[Rollout, ...]
    rewards: tuple[float, ...]
    advantages: tuple[float, ...]

    def __post_init__(self):
        if not len(self.rollouts) == len(self.rewards) == len(self.advantages):
            raise InvalidInputError("rollouts, rewards and advantages must have equal length")

    @classmethod
    def from_rewards(cls, rollouts: Sequence[Rollout], rewards: Sequence[float]) -> "GroupBatch":
        return cls(tuple(rollouts), tuple(float(r) for r in rewards),
                   tuple(group_advantages(rewards)))


def group_advantages(rewards: Sequence[float]) -> list[float]:
    """Rewards minus the group mean."""
    if len(rewards) < 2:
        raise InvalidInputError("a group needs at least two rewards")
    r = np.asarray(rewards, dtype=float)
    return list(r - math.fsum(r) / len(r))


def _log_probs(batch: GroupBatch, policy) -> np.ndarray:
    lp = np.array([policy.log_prob(r) for r in batch.rollouts])
    bad = np.flatnonzero(~np.isfinite(lp))
    if bad.size:
        raise NumericError(f"non-finite log-probability for rollout {bad[0]}", index=int(bad[0]))
    return lp


def _kl_terms(rollout: Rollout, policy, ref_policy) -> tuple[float, np.ndarray]:
    """Per-decision k3 KL estimate averaged over the trajectory, and its pathwise gradient.

    With ``r_t = pi_ref(a_t|s_t) / pi(a_t|s_t)`` each decision contributes
    ``r_t - log r_t - 1 >= 0``, whose expectation is the state-wise
    KL(pi || pi_ref).
    """
    log_r = ref_policy.step_log_probs(rollout) - policy.step_log_probs(rollout)
    r = np.exp(log_r)
    k3 = float(np.mean(r - log_r - 1.0))
    grad = ((1.0 - r) @ policy.step_scores(rollout)) / len(r)
    return k3, grad


def grpo_surrogate(batch: GroupBatch, policy, old_policy, ref_policy, config: GrpoConfig) -> float:
    """Clipped surrogate minus the KL penalty; the objective that is ascended.

    The KL penalty is ``mean_i(ratio_i * k3_i)`` where ``k3_i`` is the
    length-averaged per-decision estimate from :func:`_kl_terms`, importance
    weighted because samples come from ``old_policy``.
    """
    lp = _log_probs(batch, policy)
    lp_old = _log_probs(batch, old_policy)
    A = np.asarray(batch.advantages)
    ratio = np.exp(lp - lp_old)
    eps = config.clip_eps
    surr = np.minimum(ratio * A, np.clip(ratio, 1 - eps, 1 + eps) * A)
    k3 = np.array([_kl_terms(r, policy, ref_policy)[0] for r in batch.rollouts])
    return float(np.mean(surr) - config.kl_coeff * np.mean(ratio * k3))


def grpo_gradient(batch: GroupBatch, policy, old_policy, ref_policy, config: GrpoConfig) -> np.ndarray:
    """Ascent direction of :func:`grpo_surrogate` with respect to ``policy.params``."""
    lp = _log_probs(batch, policy)
    lp_old = _log_probs(batch, old_policy)
    A = np.asarray(batch.advantages)
    ratio = np.exp(lp - lp_old)
    eps = config.clip_eps
    grad = np.zeros_like(policy.params, dtype=float)
    for i, r in enumerate(batch.rollouts):
        ell = policy.score(r)
        if not np.isfinite(ell).all():
            raise NumericError(f"non-finite score gradient for rollout {i}", index=i)
        # the clipped branch is flat in theta; it is active only when strictly smaller
        clipped = np.clip(ratio[i], 1 - eps, 1 + eps) * A[i] < ratio[i] * A[i]
        if not clipped:
            grad += ratio[i] * A[i] * ell
        if config.kl_coeff:
            k3, k3_grad = _kl_terms(r, policy, ref_policy)
            grad -= config.kl_coeff * ratio[i] * (k3 * ell + k3_grad)
    return grad / len(batch.rollouts)


def score_rollout(rollout: Rollout, config: RewardConfig) -> RewardRecord:
    """Reward record for a rollout; the continuous mode reads the un-tiered score."""
    S = rollout.dense_score if config.mode is RewardMode.CONTINUOUS else rollout.raw_score
    return compose_reward(rollout.correct, S, config)


@dataclass(frozen=True)
class MetricsRow:
    iteration: int
    success_rate: float
    mean_S_raw: float
    mean_reward: float
    grad_norm: float
    kl_to_ref: float


METRICS_HEADER = ("iteration", "success_rate", "mean_S_raw", "mean_reward", "grad_norm", "kl_to_ref")


@dataclass
class TrainingMetrics:
    rows: list[MetricsRow] = field(default_factory=list)
    policy: object = None
    batches: list[GroupBatch] = field(default_factory=list)

    @property
    def final_success(self) -> float:
        return self.rows[-1].success_rate

    def to_csv(self) -> str:
        buf = io.StringIO()
        write_metrics_csv(self.rows, buf)
        return buf.getvalue()


def _fmt(v) -> str:
    # repr() is locale independent and round-trips
    return str(v) if isinstance(v, int) else repr(float(v))


def write_metrics_csv(rows: Sequence[MetricsRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for row in rows:
        w.writerow([_fmt(getattr(row, k)) for k in METRICS_HEADER])


@dataclass
class Env:
    """Binds an env kind to its task pool, rollout function and evaluation."""

    kind: str
    tasks: list
    max_steps: int = 0

    def initial_policy(self, seed: int):
        if self.kind == "maze":
            return MazePolicy(self.tasks[0])
        from .envs.click import click_task
        return click_task(seed)[1]

    def rollout(self, policy, task, rng):
        if self.kind == "maze":
            return rollout_maze(policy, task, self.max_steps, rng)
        return rollout_click(policy, task, rng)

    def success(self, policy) -> float:
        if self.kind == "maze":
            vals = [policy.success_probability(t, self.max_steps) for t in self.tasks]
        else:
            vals = [policy.success_probability(t) for t in self.tasks]
        return math.fsum(vals) / len(vals)

    def kl(self, policy, ref, task) -> float:
        if self.kind == "maze":
            return policy.kl(ref, task, self.max_steps)
        return policy.kl(ref, task)


def make_env(env_kind: str, task_pool: Sequence, max_steps: int | None = None) -> Env:
    if env_kind not in ("maze", "click"):
        raise InvalidInputError(f"unknown env kind {env_kind!r}")
    tasks = list(task_pool)
    if not tasks:
        raise InvalidInputError("task pool is empty")
    if env_kind == "maze":
        first = tasks[0]
        if any(not np.array_equal(t.walls, first.walls) for t in tasks):
            raise InvalidInputError("a tabular maze policy needs every pooled maze to share walls")
        H, W = first.shape
        return Env("maze", tasks, max_steps or H * W)
    return Env("click", tasks)


def train(env_kind: str, reward_config: RewardConfig, grpo_config: GrpoConfig, task_pool: Sequence,
          out_sink: Callable[[MetricsRow], None] | None = None, policy=None,
          keep_batches: bool = False) -> TrainingMetrics:
    """Run GRPO for ``grpo_config.iterations`` groups and return per-iteration metrics.

    Row 0 evaluates the initial policy. Each later row reports the batch
    sampled at that iteration (mean raw score and reward, gradient norm,
    exact KL of the sampling policy to the reference) and the exact success
    rate after the update. The reference policy is the initial policy.
    """
    env = make_env(env_kind, task_pool, grpo_config.max_steps)
    cfg = grpo_config
    lr = cfg.learning_rate if cfg.learning_rate is not None else DEFAULT_LR[env_kind]
    policy = env.initial_policy(cfg.seed) if policy is None else policy
    ref = policy
    metrics = TrainingMetrics(policy=policy)

    def emit(row):
        metrics.rows.append(row)
        if out_sink is not None:
            out_sink(row)

    emit(MetricsRow(0, env.success(policy), *_eval_group(env, policy, reward_config, cfg), 0.0, 0.0))
    for it in range(1, cfg.iterations + 1):
        task_rng = rollout_rng(cfg.seed, it, AUX_STREAM)
        task = env.tasks[int(task_rng.integers(len(env.tasks)))]
        old = policy
        rollouts = [env.rollout(policy, task, rollout_rng(cfg.seed, it, i)) for i in range(cfg.group_size)]
        recs = [score_rollout(r, reward_config) for r in rollouts]
        batch = GroupBatch.from_rewards(rollouts, [rec.R for rec in recs])
        grad = grpo_gradient(batch, policy, old, ref, cfg)
        kl = env.kl(policy, ref, task)
        try:
            policy = policy.with_params(policy.params + lr * grad)
        except InvalidInputError as exc:
            raise NumericError(f"parameter update at iteration {it} diverged: {exc}") from exc
        if keep_batches:
            metrics.batches.append(batch)
        emit(MetricsRow(
            it, env.success(policy),
            math.fsum(rec.S_raw for rec in recs) / len(recs),
            math.fsum(rec.R for rec in recs) / len(recs),
            float(np.linalg.norm(grad)), kl))
    metrics.policy = policy
    return metrics


def _eval_group(env: Env, policy, reward_config: RewardConfig, cfg: GrpoConfig) -> tuple[float, float]:
    """Mean raw score and reward of one group drawn from a dedicated evaluation stream."""
    recs = []
    for i, task in enumerate(env.tasks):
        for j in range(cfg.group_size):
            r = env.rollout(policy, task, rollout_rng(cfg.seed, 0, AUX_STREAM + 1, i, j))
            recs.append(score_rollout(r, reward_config))
    return (math.fsum(r.S_raw for r in recs) / len(recs), math.fsum(r.R for r in recs) / len(recs))
