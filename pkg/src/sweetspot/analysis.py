"""Empirical checks of the shaped-reward theory on sampled trajectories.

Everything here works on a :class:`SampleSet`: per-trajectory correctness
bits, proximity scores and score-function vectors ``ell``. The Monte Carlo
estimators resample batches from that set, so they only see it as an
empirical distribution: permuting or duplicating the set leaves every
estimate bitwise unchanged.
"""
from __future__ import annotations

import csv
import io
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from statistics import median
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import RewardConfig, RewardMode, ZoneSchema, compose_reward, schema_for_k
from .envs import click_task, generate_maze, rollout_rng
from .envs.rollout import AUX_STREAM
from .errors import DegenerateDirectionError, InvalidInputError
from .grpo import GrpoConfig, default_reward_config, make_env, train

__all__ = [
    "SampleSet",
    "Estimate",
    "SnrReport",
    "OrderingReport",
    "binary_reward",
    "continuous_reward",
    "ssl_reward",
    "reward_fn_for",
    "binary_direction",
    "projected_snr",
    "gradient_variance",
    "alignment_cov",
    "ordering_check",
    "stratified_resample",
    "equal_sr_pair",
    "snr_report",
    "sample_policy",
    "default_task_pool",
    "training_snapshot",
    "median_by",
    "efficiency_sweep",
    "zone_ablation",
    "hacking_monitor",
    "rows_to_csv",
]

SNAPSHOT_STREAM = AUX_STREAM + 2


@dataclass(frozen=True)
class SampleSet:
    """Per-trajectory ``(C, S, ell)`` tuples, stored column-wise.

    ``S_dense`` is the un-tiered score a continuous reward reads; it
    defaults to ``S``. For clicks both are the field value, for mazes ``S``
    is the blockwise score and ``S_dense`` the matched-cell fraction.
    """

    C: np.ndarray
    S: np.ndarray
    ell: np.ndarray
    S_dense: np.ndarray | None = None

    def __post_init__(self):
        C = np.asarray(self.C, dtype=np.int64).reshape(-1)
        S = np.asarray(self.S, dtype=float).reshape(-1)
        ell = np.asarray(self.ell, dtype=float)
        if ell.ndim == 1:
            ell = ell[:, None]
        dense = S if self.S_dense is None else np.asarray(self.S_dense, dtype=float).reshape(-1)
        if C.size == 0:
            raise InvalidInputError("sample set is empty")
        if not (len(C) == len(S) == len(dense) == len(ell)) or ell.ndim != 2:
            raise InvalidInputError("C, S, S_dense and ell must describe the same trajectories")
        if not np.isin(C, (0, 1)).all():
            raise InvalidInputError("C must be 0/1")
        if not (np.isfinite(S).all() and np.isfinite(dense).all() and np.isfinite(ell).all()):
            raise InvalidInputError("sample set entries must be finite")
        if ((S < 0) | (S > 1) | (dense < 0) | (dense > 1)).any():
            raise InvalidInputError("scores must lie in [0, 1]")
        for name, arr in (("C", C), ("S", S), ("ell", ell), ("S_dense", dense)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.C)

    @property
    def dim(self) -> int:
        return self.ell.shape[1]

    def take(self, idx) -> "SampleSet":
        idx = np.asarray(idx, dtype=np.int64)
        return SampleSet(self.C[idx], self.S[idx], self.ell[idx], self.S_dense[idx])

    def concat(self, other: "SampleSet") -> "SampleSet":
        return SampleSet(np.concatenate([self.C, other.C]), np.concatenate([self.S, other.S]),
                         np.vstack([self.ell, other.ell]),
                         np.concatenate([self.S_dense, other.S_dense]))

    def canonical_order(self) -> np.ndarray:
        """Index order that depends only on the multiset of samples."""
        keys = [self.ell[:, j] for j in range(self.dim - 1, -1, -1)]
        return np.lexsort(keys + [self.S_dense, self.S, self.C])

    @classmethod
    def from_rollouts(cls, rollouts) -> "SampleSet":
        rollouts = list(rollouts)
        if not rollouts:
            raise InvalidInputError("no rollouts")
        return cls([r.correct for r in rollouts], [r.raw_score for r in rollouts],
                   np.array([r.score_gradient for r in rollouts]),
                   [r.dense_score for r in rollouts])


RewardFn = Callable[[SampleSet], np.ndarray]


def reward_fn_for(config: RewardConfig) -> RewardFn:
    """Vectorised :func:`compose_reward` over a sample set."""

    def fn(samples: SampleSet) -> np.ndarray:
        S = samples.S_dense if config.mode is RewardMode.CONTINUOUS else samples.S
        return np.array([compose_reward(int(c), float(s), config).R for c, s in zip(samples.C, S)])

    fn.config = config
    return fn


def binary_reward() -> RewardFn:
    return reward_fn_for(RewardConfig(mode=RewardMode.BINARY))


def continuous_reward() -> RewardFn:
    return reward_fn_for(RewardConfig(mode=RewardMode.CONTINUOUS))


def ssl_reward(alpha: float = 0.2, schema: ZoneSchema | None = None) -> RewardFn:
    return reward_fn_for(RewardConfig(mode=RewardMode.SSL, alpha=alpha, schema=schema))


def binary_direction(samples: SampleSet) -> np.ndarray:
    """Unit vector along ``mean((C - mean C) * ell)``."""
    C = samples.C.astype(float)
    g = ((C - C.mean()) @ samples.ell) / len(samples)
    norm = float(np.linalg.norm(g))
    if norm < 1e-12:
        raise DegenerateDirectionError(f"binary gradient direction is degenerate (norm {norm:.3g})")
    return g / norm


def _unit(u, dim: int) -> np.ndarray:
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != dim:
        raise InvalidInputError(f"direction has length {u.size}, samples have dimension {dim}")
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise InvalidInputError("direction must be a unit vector")
    return u


def alignment_cov(samples: SampleSet, u) -> float:
    """Population covariance between ``S`` and ``ell @ u``."""
    proj = samples.ell @ _unit(u, samples.dim)
    S = samples.S
    return float(np.mean((S - S.mean()) * (proj - proj.mean())))


@dataclass(frozen=True)
class Estimate:
    """Point estimate with a bootstrap confidence half-width."""

    value: float
    half_width: float
    mean: float = 0.0  # of the per-batch projections
    std: float = 0.0

    def __float__(self) -> float:
        return self.value


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SSL_THREADS", "1")))
    except ValueError:
        return 1


def _batch_projections(samples: SampleSet, reward_fn: RewardFn, u, N: int, num_batches: int,
                       rng) -> np.ndarray:
    """Per-batch values of ``(1/N) sum_i (R_i - mean R) ell_i @ u``."""
    if N < 2:
        raise InvalidInputError("batch size N must be >= 2")
    if len(samples) < N:
        raise InvalidInputError(f"need at least N={N} samples, got {len(samples)}")
    if num_batches < 30:
        raise InvalidInputError("num_batches must be >= 30")
    u = _unit(u, samples.dim)
    order = samples.canonical_order()
    R = np.asarray(reward_fn(samples), dtype=float)[order]
    proj = (samples.ell @ u)[order]
    n = len(samples)
    # one uniform draw per slot; floor(U * n) is unchanged when every sample is duplicated
    U = _as_rng(rng).random((num_batches, N))

    def chunk(rows: slice) -> np.ndarray:
        idx = np.minimum((U[rows] * n).astype(np.int64), n - 1)
        r = R[idx]
        return np.mean((r - r.mean(axis=1, keepdims=True)) * proj[idx], axis=1)

    threads = _threads()
    if threads == 1:
        return chunk(slice(None))
    bounds = np.linspace(0, num_batches, threads + 1).astype(int)
    with ThreadPoolExecutor(threads) as ex:
        parts = ex.map(chunk, [slice(a, b) for a, b in zip(bounds, bounds[1:])])
    return np.concatenate(list(parts))


def _bootstrap_half_width(values: np.ndarray, stat, n_boot: int, level: float, seed: int) -> float:
    rng = np.random.default_rng(seed)
    B = len(values)
    stats = np.empty(n_boot)
    for b in range(n_boot):
        stats[b] = stat(values[rng.integers(B, size=B)])
    lo, hi = np.quantile(stats[np.isfinite(stats)], [(1 - level) / 2, (1 + level) / 2])
    return float(hi - lo) / 2


def _snr(g: np.ndarray) -> float:
    sd = g.std(ddof=1)
    m = abs(g.mean())
    if sd == 0:
        return 0.0 if m == 0 else math.inf
    return float(m / sd)


def projected_snr(samples: SampleSet, reward_fn: RewardFn, u, N: int = 64, num_batches: int = 1000,
                  rng=0, n_boot: int = 500, level: float = 0.95) -> Estimate:
    """``|mean| / std`` of the group-centred gradient projected on ``u``.

    A reward that is constant within every batch has no signal and gives
    0. Non-zero projections with zero spread give ``inf`` and a warning.
    """
    g = _batch_projections(samples, reward_fn, u, N, num_batches, rng)
    value = _snr(g)
    if math.isinf(value):
        warnings.warn("projected gradient has zero variance across batches; SNR is infinite",
                      RuntimeWarning, stacklevel=2)
        return Estimate(value, math.inf, float(g.mean()), 0.0)
    hw = _bootstrap_half_width(g, _snr, n_boot, level, seed=len(g)) if value > 0 else 0.0
    return Estimate(value, hw, float(g.mean()), float(g.std(ddof=1)))


def gradient_variance(samples: SampleSet, reward_fn: RewardFn, u, N: int = 64,
                      num_batches: int = 1000, rng=0, n_boot: int = 500,
                      level: float = 0.95) -> Estimate:
    """Variance across resampled batches of the projected gradient estimator."""
    g = _batch_projections(samples, reward_fn, u, N, num_batches, rng)
    var = float(g.var(ddof=1))
    hw = _bootstrap_half_width(g, lambda x: x.var(ddof=1), n_boot, level, seed=len(g)) if var > 0 else 0.0
    return Estimate(var, hw, float(g.mean()), math.sqrt(var))


@dataclass(frozen=True)
class SnrReport:
    u: np.ndarray
    snr_binary: float
    snr_ssl: float
    half_width_binary: float
    half_width_ssl: float
    alignment_cov: float
    N: int
    num_batches: int
    snr_continuous: float = math.nan
    half_width_continuous: float = math.nan
    var_ssl: float = math.nan
    var_continuous: float = math.nan

    @property
    def ssl_dominates(self) -> bool:
        """SSL SNR at least binary SNR up to the combined half-widths."""
        return self.snr_ssl >= self.snr_binary - (self.half_width_binary + self.half_width_ssl)

    def to_record(self) -> dict[str, str]:
        rec = {}
        for k in ("snr_binary", "snr_ssl", "snr_continuous", "half_width_binary", "half_width_ssl",
                  "half_width_continuous", "alignment_cov", "var_ssl", "var_continuous"):
            rec[k] = repr(float(getattr(self, k)))
        rec["N"] = str(self.N)
        rec["num_batches"] = str(self.num_batches)
        rec["ssl_dominates"] = str(int(self.ssl_dominates))
        rec["u"] = " ".join(repr(float(v)) for v in self.u)
        return rec


def snr_report(samples: SampleSet, ssl_config: RewardConfig, N: int = 64, num_batches: int = 1000,
               seed: int = 0, u=None) -> SnrReport:
    """Binary, ssl and continuous rewards compared on the same resampled batches."""
    if ssl_config.mode is not RewardMode.SSL:
        ssl_config = RewardConfig(RewardMode.SSL, ssl_config.alpha, ssl_config.schema)
    u = binary_direction(samples) if u is None else _unit(u, samples.dim)
    out = {}
    for name, fn in (("binary", binary_reward()), ("ssl", reward_fn_for(ssl_config)),
                     ("continuous", continuous_reward())):
        # same seed: every reward sees the same batches
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            out[name] = projected_snr(samples, fn, u, N, num_batches, rng=seed)
    var = {name: gradient_variance(samples, fn, u, N, num_batches, rng=seed, n_boot=30).value
           for name, fn in (("ssl", reward_fn_for(ssl_config)), ("continuous", continuous_reward()))}
    return SnrReport(u, out["binary"].value, out["ssl"].value, out["binary"].half_width,
                     out["ssl"].half_width, alignment_cov(samples, u), N, num_batches,
                     out["continuous"].value, out["continuous"].half_width,
                     var["ssl"], var["continuous"])


@dataclass(frozen=True)
class OrderingReport:
    SR_1: float
    SR_2: float
    mu_S_1: float
    mu_S_2: float
    J_1: float
    J_2: float
    verdict: str  # "consistent" | "violated" | "not-applicable"

    def to_record(self) -> dict[str, str]:
        rec = {k: repr(float(getattr(self, k))) for k in ("SR_1", "SR_2", "mu_S_1", "mu_S_2", "J_1", "J_2")}
        rec["verdict"] = self.verdict
        return rec


def _sign(x) -> int:
    return (x > 0) - (x < 0)


def ordering_check(setA: SampleSet, setB: SampleSet, alpha: float = 0.2) -> OrderingReport:
    """Compare ``J = SR + alpha * mu_S`` with ``mu_S`` for two sample sets.

    Arithmetic is done on exact rationals (every float is one), so the
    verdict is not subject to rounding. It is only defined when the two
    success rates are exactly equal.
    """
    if not alpha > 0:
        raise InvalidInputError("alpha must be positive")
    a = Fraction(alpha)
    stats = []
    for s in (setA, setB):
        n = len(s)
        sr = Fraction(int(s.C.sum()), n)
        mu = sum((Fraction(float(v)) for v in s.S), Fraction(0)) / n
        stats.append((sr, mu, sr + a * mu))
    (sr1, mu1, j1), (sr2, mu2, j2) = stats
    if sr1 != sr2:
        verdict = "not-applicable"
    else:
        verdict = "consistent" if _sign(j1 - j2) == _sign(mu1 - mu2) else "violated"
    return OrderingReport(float(sr1), float(sr2), float(mu1), float(mu2), float(j1), float(j2), verdict)


def stratified_resample(samples: SampleSet, n_success: int, n_fail: int, rng) -> SampleSet:
    """Draw (with replacement) exactly ``n_success`` correct and ``n_fail`` failed samples."""
    rng = _as_rng(rng)
    if n_success < 0 or n_fail < 0 or n_success + n_fail == 0:
        raise InvalidInputError("need non-negative stratum sizes with a positive total")
    pos, neg = np.flatnonzero(samples.C == 1), np.flatnonzero(samples.C == 0)
    if (n_success and not pos.size) or (n_fail and not neg.size):
        raise InvalidInputError("sample set lacks a stratum needed for the requested split")
    idx = np.concatenate([pos[rng.integers(pos.size, size=n_success)] if n_success else [],
                          neg[rng.integers(neg.size, size=n_fail)] if n_fail else []])
    return samples.take(idx.astype(np.int64))


def equal_sr_pair(setA: SampleSet, setB: SampleSet, size: int, rng) -> tuple[SampleSet, SampleSet]:
    """Resample both sets to ``size`` samples with the same number of successes.

    The shared success count is the pooled success rate times ``size``,
    rounded, and kept inside what both sets can supply.
    """
    rng = _as_rng(rng)
    if size < 1:
        raise InvalidInputError("size must be >= 1")
    both_pos = setA.C.any() and setB.C.any()
    both_neg = not setA.C.all() and not setB.C.all()
    if both_pos and both_neg:
        pooled = (setA.C.sum() + setB.C.sum()) / (len(setA) + len(setB))
        k = int(round(pooled * size))
    elif both_pos:
        k = size
    elif both_neg:
        k = 0
    else:
        raise InvalidInputError("the two sets share no feasible success count")
    return stratified_resample(setA, k, size - k, rng), stratified_resample(setB, k, size - k, rng)


def sample_policy(env_kind: str, policy, task, n: int, seed: int = 0, max_steps: int | None = None) -> SampleSet:
    """Snapshot ``n`` rollouts of ``policy`` on ``task`` into a sample set."""
    env = make_env(env_kind, [task], max_steps)
    rollouts = [env.rollout(policy, task, rollout_rng(seed, SNAPSHOT_STREAM, j)) for j in range(n)]
    return SampleSet.from_rollouts(rollouts)


def training_snapshot(env_kind: str, seed: int, iterations: int, n: int = 4000, mode="binary",
                      alpha: float = 0.2, grpo_config: GrpoConfig | None = None,
                      maze_size: int = 9):
    """Train for ``iterations`` groups, then sample ``n`` rollouts of the policy.

    Returns ``(samples, policy, task)``; used for mid-training SNR checks.
    """
    from .grpo import preset_config
    cfg = preset_config(env_kind) if grpo_config is None else grpo_config
    cfg = GrpoConfig(**{**cfg.__dict__, "iterations": iterations, "seed": seed})
    pool = default_task_pool(env_kind, seed, maze_size)
    met = train(env_kind, default_reward_config(env_kind, mode, alpha), cfg, pool)
    return sample_policy(env_kind, met.policy, pool[0], n, seed, cfg.max_steps), met.policy, pool[0]


def default_task_pool(env_kind: str, seed: int, size: int = 9) -> list:
    """The single-task pool each seed trains on: a seeded maze or click target."""
    if env_kind == "maze":
        return [generate_maze(size, size, seed)]
    if env_kind == "click":
        return [click_task(seed)[0]]
    raise InvalidInputError(f"unknown env kind {env_kind!r}")


def _map(fn, items):
    threads = _threads()
    if threads == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, items))


def efficiency_sweep(env_kind: str, reward_modes: Sequence[str], budgets: Sequence[int],
                     seeds: Sequence[int], grpo_config: GrpoConfig, alpha: float = 0.2,
                     zones: int | None = None, maze_size: int = 9) -> list[dict]:
    """Final success per ``(mode, budget, seed)`` with at most ``budget`` rollouts each."""
    if not (reward_modes and budgets and seeds):
        raise InvalidInputError("reward_modes, budgets and seeds must be non-empty")
    if any(b < 0 for b in budgets):
        raise InvalidInputError("budgets must be >= 0")
    N = grpo_config.group_size
    cells = [(m, b, s) for m in reward_modes for b in budgets for s in seeds]

    def run(cell):
        mode, budget, seed = cell
        cfg = GrpoConfig(**{**grpo_config.__dict__, "iterations": budget // N, "seed": seed})
        rc = default_reward_config(env_kind, mode, alpha, zones)
        met = train(env_kind, rc, cfg, default_task_pool(env_kind, seed, maze_size))
        return {"env": env_kind, "mode": RewardMode(mode).value, "budget": budget, "seed": seed,
                "iterations": budget // N, "rollouts": (budget // N) * N,
                "final_success": met.final_success}

    return _map(run, cells)


def zone_ablation(env_kind: str, K_values: Sequence[int] = (2, 4, 8), seeds: Sequence[int] = range(10),
                  grpo_config: GrpoConfig | None = None, alpha: float = 0.2,
                  maze_size: int = 9) -> list[dict]:
    """Final ssl success for each zone preset and seed, ``len(K_values) * len(seeds)`` rows."""
    for K in K_values:
        schema_for_k(K)  # fail fast on a missing preset
    if grpo_config is None:
        from .grpo import preset_config
        grpo_config = preset_config(env_kind)
    cells = [(K, s) for K in K_values for s in seeds]

    def run(cell):
        K, seed = cell
        cfg = GrpoConfig(**{**grpo_config.__dict__, "seed": seed})
        met = train(env_kind, default_reward_config(env_kind, "ssl", alpha, K), cfg,
                    default_task_pool(env_kind, seed, maze_size))
        return {"env": env_kind, "K": K, "seed": seed, "final_success": met.final_success}

    return _map(run, cells)


def median_by(rows: Iterable[dict], key: str, value: str = "final_success") -> dict:
    groups: dict = {}
    for r in rows:
        groups.setdefault(r[key], []).append(r[value])
    return {k: median(v) for k, v in groups.items()}


def hacking_monitor(rollouts, threshold: float = 0.7) -> float:
    """Fraction of trajectories scoring ``S_raw > threshold`` yet failing verification.

    Accepts a :class:`SampleSet` or an iterable of objects with
    ``raw_score`` (or ``S``) and ``correct`` (or ``C``) attributes.
    """
    if isinstance(rollouts, SampleSet):
        S, C = rollouts.S, rollouts.C
    else:
        items = list(rollouts)
        if not items:
            return 0.0
        S = np.array([r.raw_score if hasattr(r, "raw_score") else r.S for r in items], dtype=float)
        C = np.array([r.correct if hasattr(r, "correct") else r.C for r in items])
    return float(np.count_nonzero((S > threshold) & (C == 0))) / len(S)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(rows: Sequence[dict], fh=None) -> str | None:
    """Long-format CSV with ``repr`` floats; returns the text when ``fh`` is None."""
    buf = io.StringIO() if fh is None else fh
    if rows:
        w = csv.writer(buf, lineterminator="\n")
        keys = list(rows[0])
        w.writerow(keys)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in keys])
    return buf.getvalue() if fh is None else None
