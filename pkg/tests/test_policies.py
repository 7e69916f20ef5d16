import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tradeoff_bandits import RngStream, TradeoffParams, make_instance
from tradeoff_bandits.harness import run_episode
from tradeoff_bandits.policies import (
    NAIVE_UCB_SIGMA_FLOOR,
    PolicyKind,
    categorical,
    current_lambda_hat,
    error_allocation,
    estimated_allocation,
    forcing_arm,
    make_policy,
    select_arm,
    track,
    upper_bound_allocation,
)

P = TradeoffParams(w=0.9)


def cumulative_counts(pulled, k):
    onehot = np.zeros((len(pulled), k), dtype=np.int64)
    onehot[np.arange(len(pulled)), pulled] = 1
    return onehot.cumsum(axis=0)


def test_track_examples():
    assert track([0.25, 0.25, 0.5], [1, 1, 2], 4) == 0  # no deficit: lowest index
    assert track([0.1, 0.2, 0.7], [1, 1, 2], 4) == 2
    assert track([0.5, 0.5], [3, 0], 4) == 1


def test_categorical():
    assert categorical([0.0, 1.0, 0.0], 0.0) == 1
    assert categorical([0.0, 1.0, 0.0], 0.999999) == 1
    rng = RngStream(3, 0)
    counts = np.bincount([categorical([0.25] * 4, rng.random()) for _ in range(100_000)], minlength=4)
    assert np.all(np.abs(counts / 100_000 - 0.25) < 0.01)
    # rounding in the running sum never selects a zero-weight arm
    assert categorical([0.3, 0.7 - 1e-16, 0.0], 1.0 - 1e-17) == 1


def test_forcing_pulls_least_pulled_arm():
    for kind in ("forcing_balance", "forcing_balance_no_track", "gafs_error"):
        s = make_policy(kind, 3, P)
        assert forcing_arm(s, 1) == 0
        assert select_arm(s, 1, RngStream(0, 0)) == 0
        assert s.branch == "forcing"


def test_forcing_threshold_variants():
    s = make_policy("forcing_balance", 2, P)
    s.stats.counts = [2, 3]
    assert forcing_arm(s, 4) is None  # 2 < 2 is false
    s.forcing_plus_one = True
    assert forcing_arm(s, 4) == 0  # 2 < 3


def test_uniform_round_robin():
    s = make_policy("uniform", 3, P)
    assert [select_arm(s, t) for t in range(1, 7)] == [0, 1, 2, 0, 1, 2]


def test_ucb1_prefers_dominant_mean():
    s = make_policy("ucb1", 2, P)
    s.stats.counts = [500, 500]
    s.stats.means = [1.0, 0.0]
    s.stats.t = 1000
    assert select_arm(s, 1001) == 0
    fresh = make_policy("ucb1", 3, P)
    assert [select_arm(fresh, t) for t in (1, 2, 3)] == [0, 1, 2]


def test_gafs_error_allocation():
    s = make_policy("gafs_error", 2, P)
    for x in (0.0, 2.0):
        s.stats.update(0, x)  # sigma_hat = sqrt(2)
    for x in (0.0, 16.0):
        s.stats.update(1, x)  # sigma_hat = 8 sqrt(2)
    np.testing.assert_allclose(error_allocation(s.stats), [0.2, 0.8])
    np.testing.assert_allclose(current_lambda_hat(s, 5), [0.2, 0.8])


def test_naive_ucb_floor_gives_uniform_at_w0():
    s = make_policy("naive_ucb", 3, TradeoffParams(w=0.0))
    for arm, xs in enumerate([(0.0, 0.1), (5.0, 5.2), (-1.0, -1.05)]):
        for x in xs:
            s.stats.update(arm, x)
    lam = upper_bound_allocation(s, 7)
    np.testing.assert_allclose(lam, 1 / 3, atol=1e-12)
    assert NAIVE_UCB_SIGMA_FLOOR == 0.01


def test_naive_ucb_initialisation():
    s = make_policy("naive_ucb", 3, P)
    seq = []
    for t in range(1, 7):
        arm = select_arm(s, t)
        s.stats.update(arm, float(t))
        seq.append(arm)
    assert seq == [0, 1, 2, 0, 1, 2]
    select_arm(s, 7)
    assert s.branch == "tracking"


def test_degenerate_estimate_falls_back():
    s = make_policy("forcing_balance", 2, TradeoffParams(w=0.5, lambda_min=0.1))
    for arm in (0, 1):
        for _ in range(5):
            s.stats.update(arm, 1.0)  # both sigma_hat = 0
    arm = select_arm(s, 11)
    assert s.branch == "fallback" and s.fallbacks == 1 and arm == 0
    assert current_lambda_hat(s, 11) is None


def test_recompute_every_caches():
    s = make_policy("forcing_balance", 2, P, recompute_every=5)
    for arm, x in [(0, 0.0), (0, 1.0), (1, 0.0), (1, 3.0)]:
        s.stats.update(arm, x)
    first = estimated_allocation(s, 5)
    s.stats.update(1, 10.0)
    assert estimated_allocation(s, 6) is first
    assert estimated_allocation(s, 10) is not first


def test_invalid_usage():
    s = make_policy("forcing_balance_no_track", 2, P)
    with pytest.raises(ValueError):
        select_arm(s, 0)
    with pytest.raises(ValueError):
        select_arm(s, 1)  # needs a random stream
    with pytest.raises(ValueError):
        make_policy("forcing_balance", 2, P, recompute_every=0)
    with pytest.raises(ValueError):
        make_policy("forcing_balance", 5, TradeoffParams(w=0.5, lambda_min=0.3))
    with pytest.raises(ValueError):
        make_policy("thompson", 2, P)


def test_uniform_and_ucb1_have_no_target():
    for kind in ("uniform", "ucb1"):
        assert current_lambda_hat(make_policy(kind, 2, P), 1) is None


@pytest.mark.parametrize("kind", ["forcing_balance", "gafs_error"])
@pytest.mark.parametrize("eta", [0.5, 1.0, 2.0])
def test_forcing_guarantee(synthetic5, kind, eta):
    k = synthetic5.k
    n0 = k * (k * eta**2 + eta * math.sqrt(k) + 1)
    p = TradeoffParams(w=0.9, eta=eta)
    for seed in range(5):
        n = np.arange(1, 2001)
        after = n >= n0
        strict = run_episode(kind, synthetic5, p, 2000, seed, checkpoints=[])
        m = cumulative_counts(strict.pulled, k).min(axis=1)
        # with integer counts the strict rule guarantees the floor of the threshold
        assert np.all(m[after] >= np.floor(eta * np.sqrt(n[after])))
        plus = run_episode(kind, synthetic5, p, 2000, seed, checkpoints=[], forcing_plus_one=True)
        m = cumulative_counts(plus.pulled, k).min(axis=1)
        assert np.all(m[after] >= eta * np.sqrt(n[after]))


def test_trajectory_determinism(synthetic5):
    for kind in PolicyKind:
        a = run_episode(kind, synthetic5, P, 500, 17)
        b = run_episode(kind, synthetic5, P, 500, 17)
        assert np.array_equal(a.pulled, b.pulled)


def test_checkpoints_do_not_perturb_trajectory(synthetic5):
    for kind in ("forcing_balance", "naive_ucb"):
        a = run_episode(kind, synthetic5, P, 800, 2, checkpoints=[])
        b = run_episode(kind, synthetic5, P, 800, 2, checkpoints=range(1, 801))
        assert np.array_equal(a.pulled, b.pulled)


def test_scale_invariance_of_arm_sequence(synthetic5):
    # scaling by a power of two is exact in floating point
    for seed in range(5):
        a = run_episode("forcing_balance", synthetic5, P, 2000, seed, checkpoints=[])
        b = run_episode("forcing_balance", synthetic5.scaled(2.0), P, 2000, seed, checkpoints=[])
        assert np.array_equal(a.pulled, b.pulled)


def test_scale_invariance_generic_factor(synthetic5):
    # any c > 0: identical up to rounding-level ties, so compare most of the run
    a = run_episode("forcing_balance", synthetic5, P, 2000, 0, checkpoints=[])
    b = run_episode("forcing_balance", synthetic5.scaled(3.0), P, 2000, 0, checkpoints=[])
    assert np.mean(a.pulled == b.pulled) > 0.99


@settings(max_examples=100, deadline=None)
@given(data=st.data())
def test_tracking_contraction(data):
    """With a fixed target, tracking keeps the overshoot envelope max(max_i(T_i - t lam_i), 1)
    non-increasing, so the largest deficit of lam_tilde is at most (K - 1) * envelope / t."""
    k = data.draw(st.integers(2, 6))
    raw = np.array([data.draw(st.floats(0.0, 1.0)) for _ in range(k)]) + 1e-3
    lam = raw / raw.sum()
    counts = [data.draw(st.integers(0, 30)) for _ in range(k)]
    t = sum(counts)
    if t == 0:
        counts[0], t = 1, 1
    envelope = max(max(c - t * l for c, l in zip(counts, lam)), 1.0)
    for _ in range(300):
        arm = track(lam, counts, t + 1)
        counts[arm] += 1
        t += 1
        over = max(c - t * l for c, l in zip(counts, lam))
        new_env = max(over, 1.0)
        assert new_env <= envelope + 1e-9
        envelope = new_env
        deficit = max(l - c / t for c, l in zip(counts, lam))
        assert deficit <= (k - 1) * envelope / t + 1e-9
