import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctmdp.conditions import check_condition1
from ctmdp.corpus import pure_birth, random_instance, single_state
from ctmdp.errors import RowSumError
from ctmdp.model import CtmdpModel
from ctmdp.reduction import build_dtmdp, reduce_model, survival_factor
from ctmdp.transform import build_w_transform


def test_pure_birth_kernel():
    M = 8
    m = pure_birth(M)
    d = reduce_model(m, check_condition1(m, np.ones(M), rho=1.0))
    for x in range(M - 1):
        lab = x + 1
        row = d.kernel[x, 0]
        assert row[x + 1] == pytest.approx(lab / (lab + 1), abs=1e-12)
        assert row[d.delta] == pytest.approx(1 / (2 + 2 * lab), abs=1e-12)
        assert row[d.x_inf] == pytest.approx(1 / (2 + 2 * lab), abs=1e-12)
    # row x=1 as printed by the CLI example
    np.testing.assert_allclose(d.kernel[0, 0, [1, d.delta, d.x_inf]], [0.5, 0.25, 0.25], atol=1e-15)


def test_zero_kernel_rows():
    m = single_state()
    d = reduce_model(m, check_condition1(m, [1.0], rho=0.5))
    assert d.kernel[0, 0, d.delta] == 0.5
    assert d.kernel[0, 0, d.x_inf] == 0.5
    assert d.costs[0, 0, 0] == 5.0


def test_two_state_rate_three():
    rates = np.zeros((2, 1, 2))
    rates[0, 0, 1] = 3.0
    m = CtmdpModel.from_arrays(rates, np.ones((1, 2, 1)), 2.0)
    d = reduce_model(m, check_condition1(m, [1.0, 1.0], rho=1.0))
    np.testing.assert_allclose(d.kernel[0, 0, [1, d.delta, d.x_inf]], [3 / 5, 1 / 5, 1 / 5], atol=1e-15)


def test_sinks():
    m, cert = random_instance(5)
    d = reduce_model(m, cert)
    assert d.kernel[d.delta, 0, d.x_inf] == 1.0
    assert d.kernel[d.x_inf, 0, d.x_inf] == 1.0
    assert np.all(d.costs[:, d.x_inf, 0] == 0.0)
    assert not d.admissible[d.x_inf, 1:].any()


def test_survival_factor_examples():
    m = single_state()
    assert survival_factor(reduce_model(m, check_condition1(m, [1.0], rho=0.5))) == 0.5
    m = pure_birth(4)
    assert survival_factor(reduce_model(m, check_condition1(m, np.ones(4), rho=1.0))) == pytest.approx(7 / 8)


def test_survival_factor_grows_with_truncation():
    betas = []
    for M in (4, 8, 16, 32):
        m = pure_birth(M)
        betas.append(survival_factor(reduce_model(m, check_condition1(m, np.ones(M), rho=1.0))))
    assert betas == sorted(betas) and betas[-1] < 1.0


def test_row_sum_error_on_corrupted_transform():
    m, cert = random_instance(2)
    tm = build_w_transform(m, cert)
    tm.rates_w[0, :, tm.delta] += 5.0  # delta mass no longer matches exit rate
    with pytest.raises(RowSumError):
        build_dtmdp(tm)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_kernel_invariants(seed):
    m, cert = random_instance(seed)
    d = reduce_model(m, cert)
    n = m.n_states
    usable = d.admissible
    sums = d.kernel.sum(axis=2)
    assert np.max(np.abs(sums[usable] - 1.0)) <= 1e-12
    assert np.all(d.kernel >= 0)
    beta = survival_factor(d)
    assert beta < 1.0
    within = d.kernel[:n, :, :n].sum(axis=2)
    assert np.all(within[usable[:n]] <= beta + 1e-12)
    fin = np.isfinite(d.costs)
    assert np.all(d.costs[fin] >= 0)
    # exit to x_inf
    expected = (m.alpha - cert.rho) / (m.alpha + m.exit_rates)
    np.testing.assert_allclose(d.kernel[:n, :, d.x_inf][usable[:n]], expected[usable[:n]], rtol=1e-12)


def test_delta_carries_shift_cost():
    # costs below zero: the shifted cost at delta accrues until x_inf
    m = CtmdpModel.from_arrays(np.zeros((1, 1, 1)), np.full((1, 1, 1), -2.0), 1.0)
    cert = check_condition1(m, [1.0], rho=0.5)
    d = reduce_model(m, cert)
    assert d.shift == -2.0
    assert d.costs[0, d.delta, 0] == pytest.approx(2.0 / 0.5)
    m = single_state()
    d = reduce_model(m, check_condition1(m, [1.0], rho=0.5))
    assert d.costs[0, d.delta, 0] == 0.0


def test_dtmdp_json():
    m = pure_birth(4)
    data = reduce_model(m, check_condition1(m, np.ones(4), rho=1.0)).to_dict()
    assert data["absorbing"] == ["x_inf"]
    row = {(y, p) for x, a, y, p in data["kernel"] if x == 1}
    assert row == {(2, 0.5), ("delta", 0.25), ("x_inf", 0.25)}
