import csv
import io
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq

from sweetspot.analysis import (SampleSet, _snr, alignment_cov, binary_direction, binary_reward,
                                continuous_reward, efficiency_sweep, equal_sr_pair,
                                gradient_variance, hacking_monitor, median_by, ordering_check,
                                projected_snr, rows_to_csv, sample_policy, snr_report, ssl_reward,
                                stratified_resample, training_snapshot, zone_ablation)
from sweetspot.envs import click_task
from sweetspot.errors import DegenerateDirectionError, InvalidInputError
from sweetspot.grpo import default_reward_config, preset_config


def gaussian_set(n=100_000, seed=0):
    rng = np.random.default_rng(seed)
    ell = rng.standard_normal((n, 1))
    return SampleSet(rng.integers(0, 2, n), rng.random(n), ell)


def project(samples):
    """Reward equal to the projection itself."""
    return samples.ell[:, 0].copy()


# ---- SampleSet

def test_sample_set_validation():
    with pytest.raises(InvalidInputError):
        SampleSet([], [], np.zeros((0, 2)))
    with pytest.raises(InvalidInputError):
        SampleSet([0, 2], [0.1, 0.2], [[1.0], [2.0]])
    with pytest.raises(InvalidInputError):
        SampleSet([0, 1], [0.1, 1.2], [[1.0], [2.0]])
    with pytest.raises(InvalidInputError):
        SampleSet([0, 1], [0.1, 0.2], [[1.0], [math.nan]])
    with pytest.raises(InvalidInputError):
        SampleSet([0, 1], [0.1, 0.2], [[1.0]])
    s = SampleSet([0, 1], [0.1, 0.2], [1.0, 2.0])
    assert s.dim == 1 and len(s) == 2
    assert np.array_equal(s.S_dense, s.S)
    with pytest.raises(ValueError):
        s.C[0] = 1


# ---- direction and covariance

def test_binary_direction_examples():
    s = SampleSet([1, 0], [0.9, 0.1], [[1.0, 0.0], [-1.0, 0.0]])
    assert binary_direction(s).tolist() == [1.0, 0.0]
    s = SampleSet([1, 0, 0], [0.9, 0.1, 0.1], [[3.0, 4.0], [0.0, 0.0], [0.0, 0.0]])
    assert binary_direction(s) == pytest.approx([0.6, 0.8], abs=1e-15)


def test_binary_direction_degenerate():
    with pytest.raises(DegenerateDirectionError):
        binary_direction(SampleSet([1, 1, 1], [0.1, 0.5, 0.9], [[1.0], [2.0], [3.0]]))
    with pytest.raises(DegenerateDirectionError):
        binary_direction(SampleSet([1, 0], [0.5, 0.5], [[1.0], [1.0]]))


def test_alignment_cov_examples():
    s = SampleSet([0, 0], [0.0, 1.0], [[-1.0], [1.0]])
    assert alignment_cov(s, [1.0]) == 0.5
    assert alignment_cov(s, [-1.0]) == -0.5
    flat = SampleSet([0, 0], [0.4, 0.4], [[-1.0], [1.0]])
    assert alignment_cov(flat, [1.0]) == 0.0
    with pytest.raises(InvalidInputError):
        alignment_cov(s, [0.5])
    with pytest.raises(InvalidInputError):
        alignment_cov(s, [1.0, 0.0])


# ---- SNR estimator

def test_constant_reward_has_zero_snr():
    s = gaussian_set(1000)
    est = projected_snr(s, lambda x: np.full(len(x), 0.7), [1.0], N=16, num_batches=200)
    assert est.value == 0.0 and est.half_width == 0.0


def test_snr_of_zero_variance_projection():
    assert _snr(np.zeros(40)) == 0.0
    assert _snr(np.full(40, 0.3)) == math.inf


def test_snr_matches_gaussian_oracle():
    # g = (1/N) sum (R_i - Rbar)^2 for R ~ N(0, 1): mean (N-1)/N, variance 2(N-1)/N^2
    s = gaussian_set()
    for N in (16, 64):
        est = projected_snr(s, project, [1.0], N=N, num_batches=100_000, rng=1, n_boot=50)
        assert est.value == pytest.approx(math.sqrt((N - 1) / 2), rel=0.02)
        assert est.half_width < 0.05 * est.value


def test_variance_matches_gaussian_oracle():
    s = gaussian_set()
    N = 32
    est = gradient_variance(s, project, [1.0], N=N, num_batches=50_000, rng=2, n_boot=50)
    assert est.value == pytest.approx(2 * (N - 1) / N ** 2, rel=0.03)


def test_variance_halves_when_batch_doubles():
    rng = np.random.default_rng(3)
    n = 50_000
    C = rng.integers(0, 2, n)
    ell = rng.standard_normal((n, 1)) + 0.3 * C[:, None]
    s = SampleSet(C, rng.random(n), ell)
    v32 = gradient_variance(s, binary_reward(), [1.0], N=32, num_batches=20_000, rng=0, n_boot=100)
    v64 = gradient_variance(s, binary_reward(), [1.0], N=64, num_batches=20_000, rng=0, n_boot=100)
    ratio = v32.value / v64.value
    slack = 2 * (v32.half_width / v32.value + v64.half_width / v64.value)
    assert abs(ratio - 2.0) <= 2.0 * slack + 0.05


def test_constant_reward_has_zero_variance():
    s = gaussian_set(500)
    assert gradient_variance(s, lambda x: np.ones(len(x)), [1.0], N=8, num_batches=50).value == 0.0


@pytest.mark.parametrize("estimator", [projected_snr, gradient_variance])
def test_estimates_depend_only_on_the_multiset(estimator):
    rng = np.random.default_rng(4)
    n = 500
    s = SampleSet(rng.integers(0, 2, n), rng.random(n), rng.standard_normal((n, 3)))
    u = binary_direction(s)
    base = estimator(s, ssl_reward(), u, N=16, num_batches=300, rng=9, n_boot=20)
    perm = s.take(rng.permutation(n))
    doubled = s.concat(s)
    tripled = doubled.concat(s).take(rng.permutation(3 * n))
    for other in (perm, doubled, tripled):
        assert estimator(other, ssl_reward(), u, N=16, num_batches=300, rng=9, n_boot=20) == base


def test_threads_do_not_change_results(monkeypatch):
    s = gaussian_set(2000)
    one = projected_snr(s, project, [1.0], N=8, num_batches=1000, rng=5)
    monkeypatch.setenv("SSL_THREADS", "4")
    assert projected_snr(s, project, [1.0], N=8, num_batches=1000, rng=5) == one


def test_estimator_argument_checks():
    s = gaussian_set(100)
    with pytest.raises(InvalidInputError):
        projected_snr(s, project, [1.0], N=1)
    with pytest.raises(InvalidInputError):
        projected_snr(s, project, [1.0], N=200)
    with pytest.raises(InvalidInputError):
        projected_snr(s, project, [1.0], N=8, num_batches=10)


# ---- ordering under equal success rate

def test_ordering_examples():
    A = SampleSet([1, 0], [1.0, 0.5], [[0.0], [0.0]])
    B = SampleSet([0, 1], [0.2, 1.0], [[0.0], [0.0]])
    rep = ordering_check(A, B, 0.2)
    assert rep.verdict == "consistent"
    assert (rep.SR_1, rep.mu_S_1, rep.mu_S_2) == (0.5, 0.75, 0.6)
    assert rep.J_1 == pytest.approx(0.65)
    same = ordering_check(A, A)
    assert same.verdict == "consistent" and same.J_1 == same.J_2
    C = SampleSet([1, 1], [1.0, 1.0], [[0.0], [0.0]])
    assert ordering_check(A, C).verdict == "not-applicable"
    with pytest.raises(InvalidInputError):
        ordering_check(A, B, 0.0)


def test_ordering_is_exact_at_tiny_gaps():
    A = SampleSet([0, 0, 0], [0.1, 0.2, 0.3], [[0.0]] * 3)
    B = SampleSet([0, 0, 0], [0.1, 0.2, 0.3 + 2 ** -50], [[0.0]] * 3)
    rep = ordering_check(A, B)
    assert rep.verdict == "consistent" and rep.mu_S_1 <= rep.mu_S_2


scores = st.floats(0.0, 1.0, allow_nan=False)


@given(st.integers(1, 12), st.data(), st.floats(1e-3, 5.0))
def test_equal_success_rate_ordering_always_consistent(n, data, alpha):
    k = data.draw(st.integers(0, n))
    m = data.draw(st.integers(1, 3))  # second set is m times larger with the same rate
    SA = data.draw(st.lists(scores, min_size=n, max_size=n))
    SB = data.draw(st.lists(scores, min_size=m * n, max_size=m * n))
    A = SampleSet([1] * k + [0] * (n - k), SA, [[0.0]] * n)
    B = SampleSet(([1] * k + [0] * (n - k)) * m, SB, [[0.0]] * (m * n))
    assert ordering_check(A, B, alpha).verdict == "consistent"


# ---- resampling helpers

def test_stratified_resample_counts():
    s = SampleSet([1, 0, 0, 1, 0], [0.9, 0.1, 0.2, 0.8, 0.3], np.eye(5))
    out = stratified_resample(s, 7, 3, 0)
    assert len(out) == 10 and out.C.sum() == 7
    with pytest.raises(InvalidInputError):
        stratified_resample(SampleSet([0, 0], [0.1, 0.2], [[1.0], [2.0]]), 1, 1, 0)
    with pytest.raises(InvalidInputError):
        stratified_resample(s, 0, 0, 0)


def test_equal_sr_pair():
    rng = np.random.default_rng(0)
    A = SampleSet(rng.random(400) < 0.2, rng.random(400), rng.standard_normal((400, 2)))
    B = SampleSet(rng.random(300) < 0.6, rng.random(300), rng.standard_normal((300, 2)))
    a, b = equal_sr_pair(A, B, 200, 1)
    assert len(a) == len(b) == 200 and a.C.sum() == b.C.sum()
    assert ordering_check(a, b).verdict == "consistent"
    allpos = SampleSet([1, 1], [0.9, 0.8], [[0.0], [0.0]])
    allneg = SampleSet([0, 0], [0.1, 0.2], [[0.0], [0.0]])
    with pytest.raises(InvalidInputError):
        equal_sr_pair(allpos, allneg, 10, 0)
    a, b = equal_sr_pair(allpos, A, 5, 0)
    assert a.C.sum() == b.C.sum() == 5


# ---- monitors and tables

def test_hacking_monitor_examples():
    assert hacking_monitor([SimpleNamespace(raw_score=0.9, correct=1)] * 5) == 0.0
    assert hacking_monitor([SimpleNamespace(raw_score=0.9, correct=0)] * 4) == 1.0
    mix = ([SimpleNamespace(S=0.8, C=0)] * 3 + [SimpleNamespace(S=0.7, C=0)] * 2
           + [SimpleNamespace(S=0.95, C=1)] * 5)
    assert hacking_monitor(mix) == pytest.approx(0.3)
    assert hacking_monitor([]) == 0.0
    s = SampleSet([0, 0, 1, 0], [0.71, 0.7, 0.9, 0.1], [[0.0]] * 4)
    assert hacking_monitor(s) == 0.25
    assert hacking_monitor(s, threshold=0.5) == 0.5


def test_rows_to_csv_and_median():
    rows = [{"K": 2, "seed": 0, "final_success": 0.5}, {"K": 2, "seed": 1, "final_success": 0.1},
            {"K": 4, "seed": 0, "final_success": 1 / 3}]
    text = rows_to_csv(rows)
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert parsed[2]["final_success"] == repr(1 / 3)
    assert float(parsed[2]["final_success"]) == 1 / 3
    assert median_by(rows, "K") == {2: 0.3, 4: 1 / 3}
    assert rows_to_csv([]) == ""


# ---- sweeps

def test_sweep_budget_zero_is_mode_independent():
    cfg = preset_config("click", group_size=4)
    rows = efficiency_sweep("click", ["binary", "ssl", "continuous"], [0, 16], [0, 1], cfg)
    assert len(rows) == 12
    zero = {}
    for r in rows:
        assert r["rollouts"] <= r["budget"] and r["iterations"] == r["budget"] // 4
        if r["budget"] == 0:
            zero.setdefault(r["seed"], set()).add(r["final_success"])
    assert all(len(v) == 1 for v in zero.values())
    again = efficiency_sweep("click", ["binary", "ssl", "continuous"], [0, 16], [0, 1], cfg)
    assert rows_to_csv(rows) == rows_to_csv(again)
    with pytest.raises(InvalidInputError):
        efficiency_sweep("click", ["ssl"], [-1], [0], cfg)


def test_zone_ablation_shape():
    rows = zone_ablation("click", seeds=range(2), grpo_config=preset_config("click", iterations=3))
    assert len(rows) == 6
    assert sorted({r["K"] for r in rows}) == [2, 4, 8]
    with pytest.raises(InvalidInputError):
        zone_ablation("click", K_values=(3,), seeds=[0])


# ---- the SNR invariant on policies from both environments

def _partly_trained_maze(seed, mode, target):
    """Scale a trained policy's logits back until its success rate equals ``target``."""
    _, pol, task = training_snapshot("maze", seed, 40, n=2, mode=mode)
    t = brentq(lambda t: pol.with_params(t * pol.params).success_probability(task, 81) - target, 0, 1)
    return pol.with_params(t * pol.params), task


@pytest.mark.parametrize("seed,mode,target", [(0, "continuous", 0.3), (3, "ssl", 0.1)])
def test_ssl_snr_not_below_binary_on_maze(seed, mode, target):
    pol, task = _partly_trained_maze(seed, mode, target)
    s = sample_policy("maze", pol, task, 4000, seed)
    rep = snr_report(s, default_reward_config("maze"), N=64, num_batches=1000, seed=0)
    assert rep.alignment_cov > 0
    assert rep.ssl_dominates


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ssl_snr_not_below_binary_on_clicks(seed):
    task, pol = click_task(seed)
    s = sample_policy("click", pol, task, 4000, seed)
    rep = snr_report(s, default_reward_config("click"), N=64, num_batches=1000, seed=0)
    assert rep.alignment_cov > 0
    assert rep.ssl_dominates
    rec = rep.to_record()
    assert rec["ssl_dominates"] == "1" and float(rec["snr_ssl"]) == rep.snr_ssl


def test_snr_report_uses_shared_batches():
    task, pol = click_task(0)
    s = sample_policy("click", pol, task, 1000, 0)
    rep = snr_report(s, default_reward_config("click", mode="binary"), N=16, num_batches=200, seed=3)
    u = binary_direction(s)
    assert rep.snr_binary == projected_snr(s, binary_reward(), u, 16, 200, rng=3).value
    assert rep.snr_continuous == projected_snr(s, continuous_reward(), u, 16, 200, rng=3).value
