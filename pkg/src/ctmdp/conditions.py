"""Drift and non-explosion checks producing certificates.

All inequalities are compared with an absolute slack of ``DRIFT_TOL``.
On a finite model the limits in the exhaustion conditions degenerate, so
the checks record monotone trends over the supplied sets instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, DriftViolation
from .model import CtmdpModel

DRIFT_TOL = 1e-9
RHO_MIN = 1e-6
L_MIN = 1e-6


@dataclass(frozen=True, eq=False)
class DriftCertificate:
    """Drift function ``w >= 1`` with constants ``0 < rho < alpha`` and ``L > 0``."""

    w: np.ndarray
    rho: float
    L: float
    rho_attained: float = float("nan")
    L_attained: float = float("nan")

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))

    def scaled(self, kappa: float) -> "DriftCertificate":
        """Same certificate for ``kappa * w`` (``L`` rescales by ``1/kappa``)."""
        return DriftCertificate(
            self.w * kappa, self.rho, self.L / kappa, self.rho_attained, self.L_attained / kappa
        )

    def to_json(self, labels) -> dict:
        return {
            "w": {str(lab): float(v) for lab, v in zip(labels, self.w)},
            "rho": float(self.rho),
            "L": float(self.L),
        }


@dataclass(frozen=True, eq=False)
class LyapunovCertificate:
    """``w'`` with drift constant ``rho'`` and an exhausting chain of state sets."""

    w_prime: np.ndarray
    rho_prime: float | None
    V: tuple

    def __post_init__(self):
        object.__setattr__(self, "w_prime", np.asarray(self.w_prime, dtype=float))
        object.__setattr__(self, "V", tuple(frozenset(int(x) for x in vm) for vm in self.V))

    def to_json(self, labels) -> dict:
        return {
            "w_prime": {str(lab): float(v) for lab, v in zip(labels, self.w_prime)},
            "rho_prime": None if self.rho_prime is None else float(self.rho_prime),
            "V": [[labels[x] for x in sorted(vm)] for vm in self.V],
        }


@dataclass(frozen=True, eq=False)
class Condition5Certificate:
    """``w~'`` and optional constants; ``None`` constants are tightened."""

    w_tilde_prime: np.ndarray
    L_tilde_prime: float | None = None
    rho_tilde_prime: float | None = None
    L_tilde: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "w_tilde_prime", np.asarray(self.w_tilde_prime, dtype=float))


@dataclass
class CheckReport:
    name: str
    violations: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.passed

    def to_json(self) -> dict:
        return {"check": self.name, "passed": self.passed, "violations": list(self.violations), **_jsonable(self.details)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def drift_sums(m: CtmdpModel, f) -> np.ndarray:
    """``sum_y f(y) q(y|x,a)`` including the diagonal, shape ``(n, nA)``."""
    f = np.asarray(f, dtype=float)
    return m.rate_matrix @ f - m.exit_rates * f[:, None]


def _max_over_graph(m: CtmdpModel, values: np.ndarray) -> tuple[float, tuple[int, int] | None]:
    masked = np.where(m.admissible, values, -np.inf)
    k = int(np.argmax(masked))
    x, a = divmod(k, m.n_actions)
    return float(masked[x, a]), (x, a)


def check_condition1(
    m: CtmdpModel,
    w,
    rho: float | None = None,
    L: float | None = None,
    rho_min: float = RHO_MIN,
    L_min: float = L_MIN,
) -> DriftCertificate:
    """Tightest (or, when constants are given, validated) drift certificate."""
    w = np.asarray(w, dtype=float)
    if w.shape != (m.n_states,):
        raise DomainError(f"w must have one value per state ({m.n_states})")
    if np.any(~np.isfinite(w)) or np.any(w < 1.0):
        bad = [m.labels[x] for x in np.flatnonzero(~(w >= 1.0) | ~np.isfinite(w))]
        raise DomainError(f"w must be finite and >= 1; fails at {bad}")

    ratio = drift_sums(m, w) / w[:, None]
    rho_att, where = _max_over_graph(m, ratio)
    rho_att = max(rho_att, rho_min)

    c = m.cost_array
    neg = np.where(np.isfinite(c), np.maximum(-c, 0.0), 0.0) / w[None, :, None]
    neg = np.where(m.admissible[None], neg, 0.0)
    L_att = max(float(neg.max()) if neg.size else 0.0, L_min)

    if rho is None:
        rho = rho_att
    else:
        rho = float(rho)
        if not rho > 0:
            raise DriftViolation(f"rho must be positive, got {rho}")
        if rho_att > rho + DRIFT_TOL:
            x, a = where
            raise DriftViolation(
                f"drift {rho_att:.6g} * w exceeds rho = {rho:.6g} at state {m.labels[x]!r}, action {a}"
            )
    if rho >= m.alpha:
        x, a = where
        raise DriftViolation(
            f"rho = {rho:.6g} is not below alpha = {m.alpha:.6g} (tightest drift at state {m.labels[x]!r}, action {a})"
        )
    if L is None:
        L = L_att
    else:
        L = float(L)
        if not L > 0 or L_att > L + DRIFT_TOL:
            raise DriftViolation(f"negative cost parts need L >= {L_att:.6g}, got {L}")
    return DriftCertificate(w, rho, L, rho_att, L_att)


def check_condition2(m: CtmdpModel, cert1: DriftCertificate, lyap: LyapunovCertificate) -> CheckReport:
    rep = CheckReport("condition2")
    wp, w = lyap.w_prime, cert1.w
    n = m.n_states
    if wp.shape != (n,) or np.any(~(wp > 0)) or np.any(~np.isfinite(wp)):
        rep.violations.append("w' must be finite and positive at every state")
        return rep

    everything = frozenset(range(n))
    if not lyap.V:
        rep.violations.append("no exhausting sets supplied")
    for k in range(1, len(lyap.V)):
        if not lyap.V[k - 1] <= lyap.V[k]:
            rep.violations.append(f"V_{k} is not contained in V_{k + 1}")
    if lyap.V and lyap.V[-1] != everything:
        missing = sorted(everything - lyap.V[-1])
        rep.violations.append(f"sets do not exhaust S; missing {[m.labels[x] for x in missing]}")

    ratio = drift_sums(m, wp) / wp[:, None]
    attained, _ = _max_over_graph(m, ratio)
    rho_prime = lyap.rho_prime if lyap.rho_prime is not None else max(attained, RHO_MIN)
    if not rho_prime > 0:
        rep.violations.append("rho' must be positive")
    bad = m.admissible & (ratio * wp[:, None] > rho_prime * wp[:, None] + DRIFT_TOL)
    for x, a in zip(*np.nonzero(bad)):
        rep.violations.append(
            f"drift of w' fails at state {m.labels[x]!r}, action {a}: "
            f"{ratio[x, a] * wp[x]:.6g} > {rho_prime:.6g} * {wp[x]:.6g}"
        )

    sup_q = [float(m.q_bar[sorted(vm)].max()) if vm else 0.0 for vm in lyap.V]
    profile = []
    for vm in lyap.V:
        rest = sorted(everything - vm)
        profile.append(float(np.min(wp[rest] / w[rest])) if rest else math.inf)
    for k in range(1, len(profile)):
        if profile[k] < profile[k - 1] - DRIFT_TOL:
            rep.violations.append(f"ratio profile decreases at m = {k + 1}")
    rep.details.update(rho_prime=rho_prime, rho_prime_attained=attained, sup_q_bar=sup_q, ratio_profile=profile)
    return rep


def check_condition5(m: CtmdpModel, cert1: DriftCertificate, c5: Condition5Certificate) -> CheckReport:
    rep = CheckReport("condition5")
    wt, w = c5.w_tilde_prime, cert1.w
    if wt.shape != (m.n_states,) or np.any(~(wt > 0)) or np.any(~np.isfinite(wt)):
        rep.violations.append("w~' must be finite and positive at every state")
        return rep
    qbar = m.q_bar
    L_tp_att = max(float(np.max(qbar / wt)), L_MIN)
    ratio = drift_sums(m, wt) / wt[:, None]
    rho_tp_att = max(_max_over_graph(m, ratio)[0], RHO_MIN)
    L_t_att = float(np.max((qbar + 1.0) * w / wt))

    constants = {}
    for name, given, attained in (
        ("L_tilde_prime", c5.L_tilde_prime, L_tp_att),
        ("rho_tilde_prime", c5.rho_tilde_prime, rho_tp_att),
        ("L_tilde", c5.L_tilde, L_t_att),
    ):
        value = attained if given is None else float(given)
        if given is not None and attained > value + DRIFT_TOL:
            rep.violations.append(f"{name} = {value:.6g} is below the attained {attained:.6g}")
        constants[name] = value
        constants[name + "_attained"] = attained
    if rep.violations:
        # name the worst states for the first failing bound
        if c5.L_tilde_prime is not None:
            for x in np.flatnonzero(qbar > c5.L_tilde_prime * wt + DRIFT_TOL):
                rep.violations.append(f"q_bar exceeds L~' w~' at state {m.labels[x]!r}")
    rep.details.update(constants)
    return rep


def condition5_to_condition2(c5: Condition5Certificate, cert1: DriftCertificate, m: CtmdpModel | None = None) -> LyapunovCertificate:
    """``w' = w~' + 1``, ``rho' = rho~'`` and ``V_m = {x : (w~'+1)/w <= m}``.

    When ``c5`` carries no ``rho~'`` the model is needed to tighten it.
    """
    wt = c5.w_tilde_prime
    if np.any(~(wt > 0)) or np.any(~np.isfinite(wt)):
        raise DomainError("w~' must be finite and positive")
    rho = c5.rho_tilde_prime
    if rho is None:
        if m is None:
            raise DomainError("rho~' missing and no model given to tighten it")
        rep = check_condition5(m, cert1, c5)
        if not rep.passed:
            raise DriftViolation("; ".join(rep.violations))
        rho = rep.details["rho_tilde_prime"]
    elif m is not None:
        rep = check_condition5(m, cert1, c5)
        if not rep.passed:
            raise DriftViolation("; ".join(rep.violations))
    wp = wt + 1.0
    ratio = wp / cert1.w
    top = max(1, math.ceil(float(ratio.max()) - 1e-12))
    V = [frozenset(int(x) for x in np.flatnonzero(ratio <= k + 1e-12)) for k in range(1, top + 1)]
    return LyapunovCertificate(wp, float(rho), tuple(V))


def check_transformed_drift(m: CtmdpModel, cert1: DriftCertificate, lyap: LyapunovCertificate) -> CheckReport:
    """Lyapunov inequality for the transformed generator with ``w~ = w'/w`` (0 at delta).

    ``sum_y (w'(y)/w(y)) q^w(y|x,a) <= (rho' - rho) w'(x)/w(x)``.
    """
    rep = CheckReport("transformed_drift")
    w, wp = cert1.w, lyap.w_prime
    rho = cert1.rho
    rho_prime = lyap.rho_prime
    if rho_prime is None:
        ratio = drift_sums(m, wp) / wp[:, None]
        rho_prime = max(_max_over_graph(m, ratio)[0], RHO_MIN)
    lhs = (m.rate_matrix @ wp) / w[:, None] - (rho + m.exit_rates) * (wp / w)[:, None]
    rhs = (rho_prime - rho) * (wp / w)[:, None]
    gap = np.where(m.admissible, lhs - rhs, -np.inf)
    for x, a in zip(*np.nonzero(gap > DRIFT_TOL)):
        rep.violations.append(f"transformed drift fails at state {m.labels[x]!r}, action {a} by {gap[x, a]:.3g}")
    rep.details.update(rho=rho, rho_prime=rho_prime, max_gap=float(gap.max()))
    return rep


def trivial_lyapunov(m: CtmdpModel, cert1: DriftCertificate) -> LyapunovCertificate:
    """``w' = w`` with a single exhausting set; valid on any finite model."""
    ratio = drift_sums(m, cert1.w) / cert1.w[:, None]
    rho_prime = max(_max_over_graph(m, ratio)[0], cert1.rho, RHO_MIN)
    return LyapunovCertificate(cert1.w.copy(), rho_prime, (frozenset(range(m.n_states)),))


def condition5_trend(models, w_fn, w_tilde_fn) -> list[dict]:
    """Tightest Condition-5 constants across a sequence of truncations.

    A constant that keeps growing with the truncation level is the finite
    signature of the condition failing on the countable model.
    """
    rows = []
    for m in models:
        w = np.array([w_fn(lab) for lab in m.labels], dtype=float)
        wt = np.array([w_tilde_fn(lab) for lab in m.labels], dtype=float)
        cert = DriftCertificate(w, RHO_MIN, L_MIN)
        rep = check_condition5(m, cert, Condition5Certificate(wt))
        rows.append({"states": m.n_states, **{k: rep.details[k] for k in ("L_tilde_prime", "rho_tilde_prime", "L_tilde")}})
    return rows


# ---------------------------------------------------------------------------
# JSON blocks


def _per_state(block, m: CtmdpModel, key: str) -> np.ndarray:
    val = block[key]
    if isinstance(val, dict):
        out = np.empty(m.n_states)
        seen = set()
        for lab, v in val.items():
            i = m.index_of(lab)
            out[i] = float(v)
            seen.add(i)
        if len(seen) != m.n_states:
            raise DomainError(f"{key} must give a value for every state")
        return out
    if isinstance(val, (int, float)):
        return np.full(m.n_states, float(val))
    arr = np.asarray(val, dtype=float)
    if arr.shape != (m.n_states,):
        raise DomainError(f"{key} must have one value per state")
    return arr


def certificates_from_json(block: dict | None, m: CtmdpModel):
    """Parse a certificate block into (cert1, lyapunov or None, condition5 or None).

    Without a block, ``w = 1`` and the tightest constants are used.
    """
    block = block or {}
    w = _per_state(block, m, "w") if "w" in block else np.ones(m.n_states)
    cert1 = check_condition1(m, w, rho=block.get("rho"), L=block.get("L"))
    lyap = c5 = None
    if "lyapunov" in block:
        lb = block["lyapunov"]
        V = [frozenset(m.index_of(lab) for lab in vm) for vm in lb.get("V", [list(m.labels)])]
        lyap = LyapunovCertificate(_per_state(lb, m, "w_prime"), lb.get("rho_prime"), tuple(V))
    if "condition5" in block:
        cb = block["condition5"]
        c5 = Condition5Certificate(
            _per_state(cb, m, "w_tilde_prime"), cb.get("L_tilde_prime"), cb.get("rho_tilde_prime"), cb.get("L_tilde")
        )
    return cert1, lyap, c5
