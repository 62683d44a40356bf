"""Cross-module verification battery run by ``ctmdp verify``."""

from __future__ import annotations

import numpy as np

from .conditions import DriftCertificate, LyapunovCertificate, check_transformed_drift, trivial_lyapunov
from .errors import CapExceeded
from .model import CtmdpModel, resolvent_apply, resolvent_value
from .policies import DeterministicPolicy
from .reduction import build_dtmdp, reduce_model
from .simulate import estimate_discounted_cost
from .solver import (
    all_deterministic,
    enumerate_bruteforce,
    evaluate_deterministic,
    extract_greedy_policy,
    policy_evaluation,
    value_iteration,
)
from .transform import back_transform_value, build_w_transform, verify_lemma3
from .transition import QFunction, feller_series, honesty_defect, kc_residual, uniformization

TOL = {
    "lemma3": 1e-8,
    "honesty": 1e-8,
    "feller_vs_uniformization": 1e-8,
    "kc": 1e-7,
    "optimality": 1e-8,
    "equivalence": 1e-8,
    "resolvent_bound": 1e-9,
    "scaling": 1e-10,
}
EQUIV_CAP = 20_000


def _rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def _row(name, value, tol, passed=None):
    passed = bool(value <= tol) if passed is None else bool(passed)
    return {"check": name, "value": float(value), "tolerance": tol, "passed": passed}


def verify_model(
    m: CtmdpModel,
    cert: DriftCertificate,
    lyap: LyapunovCertificate | None = None,
    seed: int = 0,
    n_traj: int = 2000,
    n_max: int | None = None,
    eps: float = 1e-11,
    times=(0.5, 1.0, 2.0),
) -> list[dict]:
    rows = []
    d = reduce_model(m, cert)
    V, _ = value_iteration(d, eps)
    policy = extract_greedy_policy(d, V)
    lyap = lyap if lyap is not None else trivial_lyapunov(m, cert)
    nm = {} if n_max is None else {"n_max": n_max}

    drift = check_transformed_drift(m, cert, lyap)
    rows.append(_row("transformed_drift", 0.0 if drift.passed else 1.0, 0.0, drift.passed))

    lem = verify_lemma3(m, cert, policy, times, **nm)
    rows.append(_row("lemma3_residual", lem["max_residual"], TOL["lemma3"]))

    tm = build_w_transform(m, cert)
    qw = QFunction.from_generator(tm.generator(policy))
    q = QFunction.from_generator(m.generator(policy))
    t_end = max(times)
    if drift.passed:
        defect = float(np.max(np.abs(honesty_defect(qw, t_end, **nm))))
        rows.append(_row("honesty_defect", defect, TOL["honesty"]))
    fel = max(
        float(np.max(np.abs(feller_series(g, 0.0, t_end, **nm).total - uniformization(g, t_end)))) for g in (q, qw)
    )
    rows.append(_row("feller_vs_uniformization", fel, TOL["feller_vs_uniformization"]))
    kc = kc_residual(q, 0.0, 0.3 * t_end, 0.7 * t_end, **nm)
    rows.append(_row("kc_residual", kc, TOL["kc"]))

    try:
        bf = enumerate_bruteforce(d)
        rows.append(_row("vi_vs_bruteforce", _rel(V.values, bf.values), TOL["optimality"]))
        greedy_val = policy_evaluation(d, policy).values
        rows.append(_row("greedy_vs_bruteforce", _rel(greedy_val, bf.values), TOL["optimality"]))
    except CapExceeded:
        pass

    try:
        choices = all_deterministic(d, cap=EQUIV_CAP)
    except CapExceeded:
        choices = policy.choice[None]
    vals = evaluate_deterministic(d, choices)
    worst_eq = worst_bound = 0.0
    for choice, v in zip(choices, vals):
        f = DeterministicPolicy(choice)
        exact = resolvent_value(m, f)
        back = back_transform_value(v, cert, d.shift, d.residual_discount)
        worst_eq = max(worst_eq, _rel(back, exact))
        resolv_w = resolvent_apply(m, f, cert.w)
        worst_bound = max(worst_bound, float(np.max(resolv_w - cert.w / (m.alpha - cert.rho))))
    rows.append(_row("value_equivalence", worst_eq, TOL["equivalence"]))
    rows.append(_row("resolvent_drift_bound", worst_bound, TOL["resolvent_bound"]))

    d10 = build_dtmdp(build_w_transform(m, cert.scaled(10.0)))
    v10 = back_transform_value(policy_evaluation(d10, policy).values, d10.cert, d10.shift, d10.residual_discount)
    v1 = back_transform_value(policy_evaluation(d, policy).values, cert, d.shift, d.residual_discount)
    rows.append(_row("scaling_invariance", _rel(v10, v1), TOL["scaling"]))

    x0 = m.initial
    est = estimate_discounted_cost(m, policy, x0, 0, n_traj=n_traj, seed=seed, cert=cert)
    exact = float(resolvent_value(m, policy)[x0])
    gap = abs(est.mean - exact)
    allow = 4.0 * est.standard_error + est.tail_bound
    rows.append(_row("mc_vs_resolvent", gap, allow, gap <= allow + 1e-12))
    return rows

