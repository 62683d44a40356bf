"""The w-transformed CTMDP on ``S + {delta}`` with costs shifted to be nonnegative."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditions import DriftCertificate
from .errors import NegativeDeltaMass
from .model import CtmdpModel, model_to_dict
from .policies import StationaryPolicy

DELTA_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TransformedModel:
    """State ``n`` (one past the original states) is the cemetery ``delta``.

    ``rates_w`` holds off-diagonal rates on ``S + {delta}``, shape
    ``(n+1, nA, n+1)``; ``exit_rates_w[x, a] = rho + q_x(a)``.
    """

    source: CtmdpModel
    cert: DriftCertificate
    rates_w: np.ndarray
    exit_rates_w: np.ndarray
    admissible: np.ndarray
    costs_w: np.ndarray
    shift: float
    shifted_costs: np.ndarray

    @property
    def delta(self) -> int:
        return self.source.n_states

    @property
    def n_states(self) -> int:
        return self.source.n_states + 1

    @property
    def residual_discount(self) -> float:
        return self.source.alpha - self.cert.rho

    def generator(self, policy) -> np.ndarray:
        """Generator of the transformed chain under ``policy`` (extended to delta)."""
        probs = extend_policy(policy, self.source.n_actions).probs
        off = np.einsum("xa,xay->xy", probs, self.rates_w)
        np.fill_diagonal(off, 0.0)
        return off - np.diag(off.sum(axis=1))

    def scaled_bounds(self, x0: int | None = None) -> np.ndarray:
        """Constraint bounds on the shifted scale: ``d_j / w(x0) - shift / (alpha - rho)``."""
        m = self.source
        x0 = m.initial if x0 is None else x0
        return np.array(m.bounds) / self.cert.w[x0] - self.shift / self.residual_discount

    def to_dict(self) -> dict:
        """Same schema as a model file, readable back by ``load_model``."""
        m = self.source
        labels = list(m.labels) + ["delta"]
        rates = []
        for x, a, y in zip(*np.nonzero(self.rates_w)):
            if x != y and self.admissible[x, a]:
                rates.append([labels[x], int(a), labels[y], float(self.rates_w[x, a, y])])
        costs = []
        for i in range(m.n_costs):
            table = []
            for x in range(self.n_states):
                for a in np.flatnonzero(self.admissible[x]):
                    v = self.shifted_costs[i, x, a]
                    table.append([labels[x], int(a), "inf" if np.isinf(v) else float(v)])
            costs.append(table)
        base = model_to_dict(m)
        return {
            "states": labels,
            "actions": [list(acts) for acts in m.action_sets] + [[0]],
            "rates": rates,
            "costs": costs,
            "alpha": self.residual_discount,
            "bounds": [float(b) for b in self.scaled_bounds()],
            "initial": base["initial"],
            "delta_state": "delta",
            "shift": float(self.shift),
        }


def extend_policy(policy, n_actions: int) -> StationaryPolicy:
    """Append the dummy action 0 at delta."""
    probs = policy.to_stationary(n_actions).probs
    delta_row = np.zeros((1, n_actions))
    delta_row[0, 0] = 1.0
    return StationaryPolicy(np.vstack([probs, delta_row]))


def build_w_transform(m: CtmdpModel, cert: DriftCertificate) -> TransformedModel:
    n, n_act = m.n_states, m.n_actions
    w, rho = cert.w, cert.rho
    q = m.rate_matrix
    delta = n

    rates_w = np.zeros((n + 1, n_act, n + 1))
    rates_w[:n, :, :n] = q * w[None, None, :] / w[:, None, None]
    # q^w({delta}|x,a) = rho - sum_{y in S} w(y) q(y|x,a) / w(x), diagonal included
    drift = (q @ w - m.exit_rates * w[:, None]) / w[:, None]
    to_delta = rho - drift
    bad = m.admissible & (to_delta < -DELTA_TOL)
    if np.any(bad):
        x, a = np.argwhere(bad)[0]
        raise NegativeDeltaMass(
            f"killing rate {to_delta[x, a]:.3g} < 0 at state {m.labels[x]!r}, action {a}: "
            "certificate does not satisfy the drift inequality"
        )
    rates_w[:n, :, delta] = np.where(m.admissible, np.maximum(to_delta, 0.0), 0.0)

    admissible = np.zeros((n + 1, n_act), dtype=bool)
    admissible[:n] = m.admissible
    admissible[delta, 0] = True
    exit_w = np.zeros((n + 1, n_act))
    exit_w[:n] = rho + m.exit_rates

    costs_w = np.zeros((m.n_costs, n + 1, n_act))
    costs_w[:, :n] = m.cost_array / w[None, :, None]
    costs_w[:, delta] = np.inf
    costs_w[:, delta, 0] = 0.0
    finite = admissible[None] & np.isfinite(costs_w)
    shift = min(0.0, float(costs_w[finite].min())) if finite.any() else 0.0
    shifted = np.where(admissible[None], costs_w - shift, np.inf)
    return TransformedModel(m, cert, rates_w, exit_w, admissible, costs_w, shift, shifted)


def back_transform_value(v_dtmdp, cert: DriftCertificate, shift: float, residual_discount: float) -> np.ndarray:
    """Original CTMDP value ``w(x) * (v(x) + shift / (alpha - rho))`` on ``S``."""
    if not residual_discount > 0:
        raise ValueError("residual discount alpha - rho must be positive")
    w = cert.w
    v = np.asarray(v_dtmdp, dtype=float)[: len(w)]
    return w * (v + shift / residual_discount)


def verify_lemma3(
    m: CtmdpModel,
    cert: DriftCertificate,
    policy,
    t_grid,
    targets=None,
    n_max: int | None = None,
) -> dict:
    """Max residual of ``p^w(0,x,t,G) = e^{-rho t}/w(x) sum_{y in G} w(y) p(0,x,t,y)``.

    Both sides come from the Feller series; ``policy`` may be a stationary
    policy or a list of ``(start_time, policy)`` pieces.
    """
    from .transition import DEFAULT_NMAX, QFunction, feller_series

    n_max = DEFAULT_NMAX if n_max is None else n_max
    tm = build_w_transform(m, cert)
    pieces = policy if isinstance(policy, list) else [(0.0, policy)]
    times = [float(s) for s, _ in pieces]
    q_orig = QFunction.piecewise(times, [m.generator(p) for _, p in pieces])
    q_w = QFunction.piecewise(times, [tm.generator(p) for _, p in pieces])
    n = m.n_states
    w = cert.w
    if targets is None:
        targets = [[y] for y in range(n)] + [list(range(n))]
    ind = np.zeros((n, len(targets)))
    for k, gamma in enumerate(targets):
        ind[list(gamma), k] = 1.0

    worst = 0.0
    rows = []
    for t in t_grid:
        t = float(t)
        p = feller_series(q_orig, 0.0, t, n_max=n_max).total
        pw = feller_series(q_w, 0.0, t, n_max=n_max).total[:n, :n]
        lhs = pw @ ind
        rhs = np.exp(-cert.rho * t) / w[:, None] * ((p * w[None, :]) @ ind)
        res = float(np.max(np.abs(lhs - rhs)))
        rows.append({"t": t, "residual": res})
        worst = max(worst, res)
    return {"max_residual": worst, "by_time": rows}
