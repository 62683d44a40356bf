import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctmdp.conditions import (
    RHO_MIN,
    Condition5Certificate,
    LyapunovCertificate,
    certificates_from_json,
    check_condition1,
    check_condition2,
    check_condition5,
    check_transformed_drift,
    condition5_to_condition2,
    condition5_trend,
    trivial_lyapunov,
)
from ctmdp.corpus import pure_birth, random_instance
from ctmdp.errors import DomainError, DriftViolation
from ctmdp.model import CtmdpModel


def zero_model(n=3, alpha=1.0):
    return CtmdpModel.from_arrays(np.zeros((n, 1, n)), np.ones((1, n, 1)), alpha)


def test_zero_kernel_gives_rho_min():
    cert = check_condition1(zero_model(), [1.0, 2.0, 5.0])
    assert cert.rho == RHO_MIN


def test_pure_birth_rho_min_and_explicit_rho():
    m = pure_birth(8)
    assert check_condition1(m, np.ones(8)).rho == RHO_MIN
    cert = check_condition1(m, np.ones(8), rho=1.0)
    assert cert.rho == 1.0


def test_drift_violation_two_state():
    rates = np.zeros((2, 1, 2))
    rates[0, 0, 1] = 3.0
    m = CtmdpModel.from_arrays(rates, np.ones((1, 2, 1)), 1.0)
    with pytest.raises(DriftViolation, match="27"):
        check_condition1(m, [1.0, 10.0])


def test_w_below_one_is_domain_error():
    with pytest.raises(DomainError):
        check_condition1(zero_model(2), [1.0, 0.5])


def test_explicit_rho_too_small_rejected():
    rates = np.zeros((2, 1, 2))
    rates[0, 0, 1] = 1.0
    m = CtmdpModel.from_arrays(rates, np.ones((1, 2, 1)), 5.0)
    with pytest.raises(DriftViolation):
        check_condition1(m, [1.0, 3.0], rho=1.0)  # drift ratio is 2


def test_L_covers_negative_costs():
    m = CtmdpModel.from_arrays(np.zeros((2, 1, 2)), np.array([[[-4.0], [1.0]]]), 1.0)
    cert = check_condition1(m, [2.0, 1.0])
    assert cert.L == pytest.approx(2.0)
    with pytest.raises(DriftViolation):
        check_condition1(m, [2.0, 1.0], L=1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(1.5, 50.0))
def test_scaling_w_keeps_rho_and_scales_L(seed, kappa):
    m, cert = random_instance(seed)
    a = check_condition1(m, cert.w)
    b = check_condition1(m, kappa * cert.w)
    assert b.rho_attained == pytest.approx(a.rho_attained, rel=1e-12, abs=1e-15)
    if a.L_attained > 1e-6 * kappa:
        assert b.L_attained == pytest.approx(a.L_attained / kappa, rel=1e-12)


def test_condition2_trivial_exhaustion():
    m, cert = random_instance(3)
    rep = check_condition2(m, cert, trivial_lyapunov(m, cert))
    assert rep.passed


def test_condition2_pure_birth_ratio_profile():
    M = 8
    m = pure_birth(M)
    cert = check_condition1(m, np.ones(M), rho=1.0)
    V = [range(k) for k in range(1, M + 1)]
    rep = check_condition2(m, cert, LyapunovCertificate(np.arange(1.0, M + 1), 2.0, V))
    assert rep.passed
    profile = rep.details["ratio_profile"]
    assert profile[:-1] == [float(k + 1) for k in range(1, M)]
    assert rep.details["rho_prime_attained"] == pytest.approx(2.0)


def test_condition2_names_failing_state():
    m = pure_birth(5)
    cert = check_condition1(m, np.ones(5), rho=1.0)
    wp = np.array([1.0, 2.0, 30.0, 4.0, 5.0])
    rep = check_condition2(m, cert, LyapunovCertificate(wp, 2.0, [range(5)]))
    assert not rep.passed
    assert any("state 2, action 0" in v for v in rep.violations)


def test_condition2_rejects_non_exhausting_sets():
    m = pure_birth(4)
    cert = check_condition1(m, np.ones(4), rho=1.0)
    rep = check_condition2(m, cert, LyapunovCertificate(np.ones(4), 1.0, [[0], [0, 1]]))
    assert not rep.passed


def test_condition5_zero_kernel():
    m = zero_model()
    cert = check_condition1(m, np.ones(3))
    rep = check_condition5(m, cert, Condition5Certificate(np.ones(3)))
    assert rep.passed
    assert rep.details["L_tilde"] == pytest.approx(1.0)


def test_condition5_pure_birth_2x():
    M = 8
    m = pure_birth(M)
    cert = check_condition1(m, np.ones(M), rho=1.0)
    rep = check_condition5(m, cert, Condition5Certificate(np.arange(1.0, M + 1), 2.0, None, 3.0))
    assert rep.passed
    assert rep.details["L_tilde_prime_attained"] == pytest.approx(2.0)
    assert rep.details["L_tilde_attained"] <= 3.0


def test_condition5_squared_family_trend():
    levels = [pure_birth(M, coef=1.0, power=2.0) for M in (4, 8, 16, 32)]
    rows = condition5_trend(levels, lambda x: 1.0, float)
    L = [r["L_tilde_prime"] for r in rows]
    assert L == sorted(L) and L[-1] > 4 * L[0]
    assert L == pytest.approx([3.0, 7.0, 15.0, 31.0])
    linear = condition5_trend([pure_birth(M) for M in (4, 8, 16, 32)], lambda x: 1.0, float)
    assert {r["L_tilde_prime"] for r in linear} == {2.0}


def test_condition5_fixed_constant_fails_on_large_truncation():
    m = pure_birth(10, coef=1.0, power=2.0)
    cert = check_condition1(m, np.ones(10), rho=1.0)
    rep = check_condition5(m, cert, Condition5Certificate(np.arange(1.0, 11), 3.0))
    assert not rep.passed


def test_condition5_to_condition2_trivial():
    m = zero_model()
    cert = check_condition1(m, np.ones(3))
    lyap = condition5_to_condition2(Condition5Certificate(np.ones(3)), cert, m)
    np.testing.assert_array_equal(lyap.w_prime, 2.0)
    assert lyap.V[1] == frozenset(range(3))


def test_condition5_to_condition2_pure_birth():
    M = 6
    m = pure_birth(M)
    cert = check_condition1(m, np.ones(M), rho=1.0)
    lyap = condition5_to_condition2(Condition5Certificate(np.arange(1.0, M + 1)), cert, m)
    np.testing.assert_array_equal(lyap.w_prime, np.arange(2.0, M + 2))
    for k, vm in enumerate(lyap.V, start=1):
        assert vm == frozenset(range(k - 1))  # labels 1..k-1
    assert check_condition2(m, cert, lyap).passed


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_condition5_implies_condition2(seed):
    m, cert = random_instance(seed)
    rng = np.random.default_rng(seed)
    wt = rng.uniform(0.5, 4.0, m.n_states)
    lyap = condition5_to_condition2(Condition5Certificate(wt), cert, m)
    assert check_condition2(m, cert, lyap).passed


def test_transformed_drift_zero_kernel():
    m = zero_model()
    cert = check_condition1(m, [1.0, 2.0, 3.0], rho=0.5)
    lyap = LyapunovCertificate(np.array([1.0, 1.0, 1.0]), 0.7, [range(3)])
    assert check_transformed_drift(m, cert, lyap).passed


def test_transformed_drift_pure_birth():
    M = 8
    m = pure_birth(M)
    cert = check_condition1(m, np.ones(M), rho=1.0)
    lyap = LyapunovCertificate(np.arange(2.0, M + 2), 2.0, [range(M)])
    assert check_transformed_drift(m, cert, lyap).passed


def test_transformed_drift_small_rho_prime_fails():
    M = 8
    m = pure_birth(M)
    cert = check_condition1(m, np.ones(M), rho=1.0)
    lyap = LyapunovCertificate(np.arange(2.0, M + 2), 0.5, [range(M)])
    rep = check_transformed_drift(m, cert, lyap)
    assert not rep.passed
    # the top state has no outflow, so nothing fails there
    assert len(rep.violations) == M - 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_transformed_drift_matches_lyapunov_drift(seed):
    # algebraically the transformed inequality reduces to the w' drift bound
    m, cert = random_instance(seed)
    lyap = trivial_lyapunov(m, cert)
    assert check_transformed_drift(m, cert, lyap).passed == check_condition2(m, cert, lyap).passed


def test_certificates_from_json_block():
    m = pure_birth(4)
    block = {"w": 1, "rho": 1, "condition5": {"w_tilde_prime": [1, 2, 3, 4]}}
    cert, lyap, c5 = certificates_from_json(block, m)
    assert cert.rho == 1.0 and lyap is None
    np.testing.assert_array_equal(c5.w_tilde_prime, [1, 2, 3, 4])
    cert, _, _ = certificates_from_json(None, m)
    np.testing.assert_array_equal(cert.w, 1.0)
