import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ewreserve.network import NetworkConfig, enumerate_actions, default_network
from ewreserve.policy import (EwParams, PolicyState, digamma, expected_costs, init_policy, observe, observe_row,
                              sample_action)
from ewreserve.transfer import solve_transfer


class FakeSpace:
    def __init__(self, n):
        self.n = n

    def __len__(self):
        return self.n


def batch_distribution(costs, c0_history, budget, eta, lam):
    """Weights straight from the full-history exponent, evaluated in 50-digit arithmetic."""
    mpmath.mp.dps = 50
    n = len(costs)
    t_total = len(c0_history)
    exps = []
    for a in range(n):
        total = mpmath.mpf(0)
        for s in range(1, t_total + 1):
            avg = sum(mpmath.mpf(c0_history[r][a]) - mpmath.mpf(budget) for r in range(s)) / s
            total += mpmath.mpf(costs[a]) + lam * max(avg, 0)
        exps.append(mpmath.exp(-eta * total))
    z = sum(exps)
    return np.array([float(w / z) for w in exps])


def run(costs, rows, budget, params):
    state = init_policy(FakeSpace(len(costs)), params)
    for row in rows:
        state = observe_row(state, np.asarray(costs), np.asarray(row), budget)
    return state


@pytest.mark.parametrize("n", [1, 4, 1000])
def test_uniform_init(n):
    state = init_policy(FakeSpace(n), EwParams(0.1, 1.0))
    assert state.t == 0
    assert np.allclose(state.distribution, 1.0 / n, rtol=0, atol=1e-15)
    assert not state.cum_penalty.any() and not state.cum_constraint.any()


def test_empty_space_rejected():
    with pytest.raises(ValueError):
        init_policy(FakeSpace(0), EwParams(0.1))


def test_params_domain():
    with pytest.raises(ValueError):
        EwParams(0.0)
    with pytest.raises(ValueError):
        EwParams(0.1, -1.0)
    assert EwParams.for_horizon(5000).eta == pytest.approx(1 / math.sqrt(5000))


def test_digamma_running_average():
    state = run([0.2], [[0.3], [0.1]], 0.1, EwParams(0.1, 1.0))
    assert digamma(state, 0) == pytest.approx(0.1)
    under = run([0.2], [[0.05], [0.1]], 0.1, EwParams(0.1, 1.0))
    assert digamma(under, 0) == 0.0
    single = run([0.2], [[0.07]], 0.0, EwParams(0.1, 1.0))
    assert digamma(single, 0) == pytest.approx(0.07)


def test_digamma_needs_observation():
    with pytest.raises(ValueError):
        digamma(init_policy(FakeSpace(2), EwParams(0.1)), 0)


def test_one_step_weight_factor():
    # C = 0.2, penalty 0.1 after one step: exponent -0.1 * (0.2 + 1 * 0.1)
    state = run([0.2, 0.2], [[0.2, 0.1]], 0.1, EwParams(0.1, 1.0))
    assert state.cum_penalty[0] == pytest.approx(0.3)
    assert math.exp(-0.1 * state.cum_penalty[0]) == pytest.approx(0.970446, abs=1e-6)
    lone = run([0.2], [[0.2]], 0.1, EwParams(0.1, 1.0))
    assert lone.distribution.tolist() == [1.0]


def test_symmetric_actions_stay_uniform():
    rng = np.random.default_rng(0)
    rows = [[x, x] for x in rng.random(50)]
    state = run([0.3, 0.3], rows, 0.1, EwParams(0.5, 2.0))
    assert state.distribution[0] == state.distribution[1] == 0.5


def test_zero_lambda_is_plain_hedge():
    costs = np.array([0.1, 0.4, 0.2])
    rng = np.random.default_rng(1)
    rows = rng.random((30, 3))
    state = run(costs, rows, 0.1, EwParams(0.3, 0.0))
    w = np.exp(-0.3 * 30 * costs)
    assert np.allclose(state.distribution, w / w.sum(), atol=1e-14)


def test_recursion_matches_batch_small():
    rng = np.random.default_rng(2)
    costs = rng.random(6)
    rows = rng.random((25, 6)) * 0.3
    state = run(costs, rows, 0.1, EwParams(0.4, 3.0))
    assert np.max(np.abs(state.distribution - batch_distribution(costs, rows, 0.1, 0.4, 3.0))) <= 1e-12


def test_long_horizon_no_underflow():
    costs = np.array([15.0, 14.0, 0.05])
    rows = np.zeros((5000, 3))
    state = run(costs, rows, 0.1, EwParams(1.0, 32.0))
    assert np.isfinite(state.distribution).all()
    assert state.distribution[2] == 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(1, 30), st.floats(0.01, 2.0), st.floats(0.0, 40.0), st.integers(0, 2**31))
def test_simplex_and_shift_invariance(n, steps, eta, lam, seed):
    rng = np.random.default_rng(seed)
    costs = rng.random(n) * 15
    rows = rng.random((steps, n))
    params = EwParams(eta, lam)
    state = init_policy(FakeSpace(n), params)
    shifted = init_policy(FakeSpace(n), params)
    for row in rows:
        state = observe_row(state, costs, row, 0.1)
        shifted = observe_row(shifted, costs + 7.0, row, 0.1)
        p = state.distribution
        assert np.all(p >= 0) and abs(p.sum() - 1) <= 1e-12
        assert np.all(state.digammas() >= 0)
    assert np.allclose(state.distribution, shifted.distribution, rtol=1e-9, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.floats(0.01, 2.0), st.floats(0.0, 40.0), st.integers(0, 2**31))
def test_dominated_action_gets_less_mass(steps, eta, lam, seed):
    rng = np.random.default_rng(seed)
    costs = np.array([0.5, 0.5 + rng.random() + 0.01])
    rows = rng.random((steps, 2))
    rows[:, 1] = rows[:, 0] + rng.random(steps) * 0.2
    state = run(costs, rows, 0.1, EwParams(eta, lam))
    assert state.distribution[0] > state.distribution[1]


def test_observe_uses_transfer_solver():
    cfg = NetworkConfig((3, 3), (0.05, 0.05), (0.05, 0.05), ((0, 0.02), (0.02, 0)), budget=0.0)
    space = enumerate_actions(cfg)
    state = observe(init_policy(space, EwParams(0.1, 1.0)), cfg, space, (3, 1))
    expected = [solve_transfer(cfg, a, (3, 1)).blocking_cost for a in space.actions]
    assert np.allclose(state.cum_constraint, expected, atol=0)


def test_sample_degenerate_and_deterministic():
    n = 5
    p = np.zeros(n)
    p[3] = 1.0
    state = PolicyState(EwParams(0.1), 1, np.zeros(n), np.zeros(n), p)
    rng = np.random.default_rng(0)
    assert {sample_action(state, rng) for _ in range(200)} == {3}
    uni = init_policy(FakeSpace(4), EwParams(0.1))
    a = [sample_action(uni, np.random.default_rng(9)) for _ in range(3)]
    r1, r2 = np.random.default_rng(11), np.random.default_rng(11)
    assert [sample_action(uni, r1) for _ in range(50)] == [sample_action(uni, r2) for _ in range(50)]
    assert len(set(a)) == 1


def test_sample_uniform_frequencies():
    uni = init_policy(FakeSpace(4), EwParams(0.1))
    rng = np.random.default_rng(123)
    n = 100_000
    counts = np.bincount([sample_action(uni, rng) for _ in range(n)], minlength=4)
    sigma = math.sqrt(n * 0.25 * 0.75)
    assert np.all(np.abs(counts - n / 4) <= 3 * sigma)


def test_expected_costs():
    costs = np.array([0.2, 0.4])
    p = np.array([1.0, 0.0])
    assert expected_costs(p, costs, np.zeros(2), np.zeros(2))[0] == 0.2
    assert expected_costs(np.array([0.5, 0.5]), costs, np.zeros(2), np.zeros(2))[0] == pytest.approx(0.3)
    state = run(costs, [[0.1, 0.1]], 0.1, EwParams(0.1, 1.0))
    assert expected_costs(state.distribution, costs, np.full(2, 0.1), state.digammas())[2] == 0.0
    with pytest.raises(ValueError):
        expected_costs(p, costs, np.zeros(3), np.zeros(2))


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    state = run(rng.random(5), rng.random((10, 5)), 0.1, EwParams(0.2, 5.0))
    state.save(tmp_path / "s.npz")
    back = PolicyState.load(tmp_path / "s.npz")
    assert back.t == 10 and back.params == state.params
    for name in ("cum_penalty", "cum_constraint", "distribution"):
        assert np.array_equal(getattr(back, name), getattr(state, name))
    # resuming gives the same trajectory as never stopping
    row = rng.random(5)
    assert np.array_equal(observe_row(back, np.ones(5), row, 0.1).distribution,
                          observe_row(state, np.ones(5), row, 0.1).distribution)


def test_default_space_uniform_start():
    space = enumerate_actions(default_network())
    assert np.all(init_policy(space, EwParams(0.1)).distribution == 1e-3)
