import math
import os

import numpy as np
import pytest
from scipy import stats

from ctmdp.conditions import check_condition1
from ctmdp.corpus import pure_birth, random_instance, single_state, two_state
from ctmdp.errors import InfiniteCost
from ctmdp.model import CtmdpModel, ModelFamily, resolvent_apply, resolvent_value
from ctmdp.policies import DeterministicPolicy, StationaryPolicy
from ctmdp.simulate import (
    default_horizon,
    estimate_discounted_cost,
    estimate_w_integral,
    simulate_trajectory,
    sojourn_samples,
    trajectories_csv,
)
from ctmdp.transition import truncated_qfunction, uniformization


def test_zero_kernel_trajectory_absorbed():
    m = single_state()
    tr = simulate_trajectory(m, DeterministicPolicy([0]), 0, 10.0, seed=1)
    assert tr.jumps == [(0.0, 0, 0)]
    assert tr.terminal == "absorbed"


def test_trajectory_invariants():
    m, _ = random_instance(9)
    p = DeterministicPolicy([int(np.flatnonzero(r)[0]) for r in m.admissible])
    for k in range(50):
        tr = simulate_trajectory(m, p, 0, 5.0, seed=3, index=k)
        times = [j[0] for j in tr.jumps]
        states = [j[1] for j in tr.jumps]
        assert times[0] == 0.0
        assert all(b > a for a, b in zip(times, times[1:]))
        assert all(b != a for a, b in zip(states, states[1:]))
        assert times[-1] < 5.0


def test_two_state_jump_probability():
    m = two_state()
    n = 100_000
    jumped = sojourn_samples(m, DeterministicPolicy([0, 0]), 0, n, seed=5) <= 1.0
    p = 1 - math.exp(-1)
    assert abs(jumped.mean() - p) <= 4 * math.sqrt(p * (1 - p) / n)


def test_sojourn_ks_against_mixed_rate():
    rates = np.zeros((3, 2, 3))
    rates[0, 0, 1], rates[0, 1, 2], rates[0, 1, 1] = 1.0, 2.0, 0.5
    m = CtmdpModel.from_arrays(rates, np.zeros((1, 3, 2)), 5.0)
    p = StationaryPolicy([[0.3, 0.7], [1.0, 0.0], [1.0, 0.0]])
    rate = 0.3 * 1.0 + 0.7 * 2.5
    samples = sojourn_samples(m, p, 0, 100_000, seed=11)
    assert stats.kstest(samples, "expon", args=(0, 1 / rate)).pvalue > 1e-3


def test_pure_birth_occupancy_at_half():
    M = 8
    m = pure_birth(M)
    P = uniformization(truncated_qfunction(ModelFamily("pure_birth", {"birth_coef": 2.0}, M)), 0.5)[0]
    n = 4000
    counts = np.zeros(M)
    p = DeterministicPolicy(np.zeros(M, int))
    for k in range(n):
        tr = simulate_trajectory(m, p, 0, 0.5, seed=21, index=k)
        counts[tr.jumps[-1][1]] += 1
    freq = counts / n
    sigma = np.sqrt(np.maximum(P * (1 - P), 1e-12) / n)
    assert np.all(np.abs(freq - P) <= 4 * sigma + 1e-12)


def test_zero_costs_estimate():
    m = pure_birth(5)
    est = estimate_discounted_cost(m, DeterministicPolicy([0] * 5), 0, n_traj=200)
    assert est.mean == 0.0 and est.standard_error == 0.0


def test_single_state_estimate_and_tail():
    m = single_state()
    cert = check_condition1(m, [1.0], rho=0.5)
    short = estimate_discounted_cost(m, DeterministicPolicy([0]), 0, n_traj=10, horizon=5.0, cert=cert)
    long = estimate_discounted_cost(m, DeterministicPolicy([0]), 0, n_traj=10, horizon=20.0, cert=cert)
    assert long.tail_bound < short.tail_bound
    assert abs(long.mean - 5.0) <= long.tail_bound
    assert abs(short.mean - 5.0) <= short.tail_bound


def test_random_instance_against_resolvent():
    m, cert = random_instance(4, max_states=5)
    p = DeterministicPolicy([int(np.flatnonzero(r)[-1]) for r in m.admissible])
    est = estimate_discounted_cost(m, p, 0, n_traj=4000, seed=2, cert=cert)
    exact = resolvent_value(m, p)[0]
    assert abs(est.mean - exact) <= 4 * est.standard_error + est.tail_bound


def test_tail_bound_formula():
    m, cert = random_instance(4)
    p = DeterministicPolicy([int(np.flatnonzero(r)[0]) for r in m.admissible])
    est = estimate_discounted_cost(m, p, 1, n_traj=5, horizon=3.0, cert=cert)
    c = np.abs(m.mixed_cost(p, 0)) / cert.w
    gap = m.alpha - cert.rho
    expected = max(cert.L, c.max()) * cert.w[1] * math.exp(-gap * 3.0) / gap
    assert est.tail_bound == pytest.approx(expected)
    assert default_horizon(2.0, 1.0) == pytest.approx(math.log(1e4))


def test_w_integral_constant_and_bound():
    m = pure_birth(8)
    p = DeterministicPolicy(np.zeros(8, int))
    est = estimate_w_integral(m, p, 0, np.ones(8), n_traj=500)
    assert abs(est.mean - 0.5) <= 4 * est.standard_error + est.tail_bound
    m, cert = random_instance(6)
    p = DeterministicPolicy([int(np.flatnonzero(r)[0]) for r in m.admissible])
    est = estimate_w_integral(m, p, 0, cert.w, n_traj=2000, seed=4)
    assert est.mean <= cert.w[0] / (m.alpha - cert.rho) + 4 * est.standard_error
    exact = resolvent_apply(m, p, cert.w)[0]
    assert abs(est.mean - exact) <= 4 * est.standard_error + est.tail_bound


def test_reproducible_across_workers():
    m, cert = random_instance(12)
    p = StationaryPolicy(m.admissible / m.admissible.sum(axis=1, keepdims=True))
    runs = [estimate_discounted_cost(m, p, 0, n_traj=800, seed=99, cert=cert, workers=w) for w in (1, 3, 8)]
    assert len({(r.mean, r.standard_error) for r in runs}) == 1


def test_env_var_caps_workers(monkeypatch):
    from ctmdp.solver import worker_count

    monkeypatch.setenv("CTMDP_THREADS", "2")
    assert worker_count(8) == 2
    assert worker_count(None) == min(2, os.cpu_count() or 1)
    assert worker_count(1) == 1


def test_infinite_cost_reachable():
    rates = np.zeros((2, 2, 2))
    rates[0, 0, 1] = 1.0
    costs = np.array([[[1.0, 1.0], [np.inf, 2.0]]])
    m = CtmdpModel.from_arrays(rates, costs, 2.0)
    with pytest.raises(InfiniteCost):
        estimate_discounted_cost(m, DeterministicPolicy([0, 0]), 0, n_traj=5)
    est = estimate_discounted_cost(m, DeterministicPolicy([0, 1]), 0, n_traj=5)
    assert math.isfinite(est.mean)


def test_trajectory_csv():
    m = two_state()
    text = trajectories_csv(m, DeterministicPolicy([0, 0]), 0, 5.0, seed=1, count=3)
    lines = text.strip().splitlines()
    assert lines[0] == "trajectory,t,state,action"
    assert lines[1] == "0,0.0,0,0"
    assert all(len(line.split(",")) == 4 for line in lines)
