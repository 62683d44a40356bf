"""Reduction of the transformed CTMDP to a total-cost DTMDP on ``S + {delta, x_inf}``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditions import DriftCertificate
from .errors import RowSumError
from .model import CtmdpModel
from .transform import TransformedModel, build_w_transform

ROW_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DtmdpModel:
    """Kernel ``T`` of shape ``(n+2, nA, n+2)`` and nonnegative costs ``(N+1, n+2, nA)``.

    Index ``n`` is ``delta`` and ``n+1`` is ``x_inf``; both only admit
    action 0. ``alpha``, ``rho``, ``w`` and the exit rates are kept so
    values can be mapped back without the source model.
    """

    labels: tuple
    kernel: np.ndarray
    costs: np.ndarray
    admissible: np.ndarray
    alpha: float
    rho: float
    w: np.ndarray
    exit_rates: np.ndarray
    shift: float
    bounds: np.ndarray
    initial: int
    cert: DriftCertificate

    @property
    def n_states(self) -> int:
        """Original states only."""
        return len(self.w)

    @property
    def delta(self) -> int:
        return self.n_states

    @property
    def x_inf(self) -> int:
        return self.n_states + 1

    @property
    def n_actions(self) -> int:
        return self.kernel.shape[1]

    @property
    def n_costs(self) -> int:
        return self.costs.shape[0]

    @property
    def residual_discount(self) -> float:
        return self.alpha - self.rho

    @property
    def usable(self) -> np.ndarray:
        """Pairs admitted by the Bellman argmin (finite ``C_0``)."""
        return self.admissible & np.isfinite(self.costs[0])

    def scaled_bounds(self, x0: int | None = None) -> np.ndarray:
        x0 = self.initial if x0 is None else x0
        return self.bounds / self.w[x0] - self.shift / self.residual_discount

    def to_dict(self) -> dict:
        labels = list(self.labels)
        kernel = [
            [labels[x], int(a), labels[y], float(self.kernel[x, a, y])]
            for x, a, y in zip(*np.nonzero(self.kernel))
            if self.admissible[x, a]
        ]
        costs = [
            [[labels[x], int(a), "inf" if np.isinf(c[x, a]) else float(c[x, a])] for x, a in zip(*np.nonzero(self.admissible))]
            for c in self.costs
        ]
        return {
            "states": labels,
            "actions": [[int(a) for a in np.flatnonzero(row)] for row in self.admissible],
            "kernel": kernel,
            "costs": costs,
            "absorbing": [labels[self.x_inf]],
            "alpha": self.alpha,
            "rho": self.rho,
            "w": [float(v) for v in self.w],
            "shift": self.shift,
            "bounds": [float(b) for b in self.scaled_bounds()],
            "initial": labels[self.initial],
        }


def build_dtmdp(tm: TransformedModel, m: CtmdpModel | None = None, cert: DriftCertificate | None = None) -> DtmdpModel:
    m = tm.source if m is None else m
    cert = tm.cert if cert is None else cert
    n, n_act = m.n_states, m.n_actions
    delta, x_inf = n, n + 1
    alpha, rho, w = m.alpha, cert.rho, cert.w
    denom = alpha + m.exit_rates  # (n, nA)

    T = np.zeros((n + 2, n_act, n + 2))
    # jump targets inside S use the off-diagonal kernel only
    T[:n, :, :n] = m.rate_matrix * w[None, None, :] / (denom * w[:, None])[:, :, None]
    T[:n, :, delta] = tm.rates_w[:n, :, delta] / denom
    T[:n, :, x_inf] = (alpha - rho) / denom
    T[delta, 0, x_inf] = 1.0
    T[x_inf, 0, x_inf] = 1.0

    admissible = np.zeros((n + 2, n_act), dtype=bool)
    admissible[: n + 1] = tm.admissible
    admissible[x_inf, 0] = True
    T[~admissible] = 0.0

    sums = T.sum(axis=2)
    dev = np.where(admissible, np.abs(sums - 1.0), 0.0)
    if np.any(dev > ROW_TOL):
        x, a = np.argwhere(dev > ROW_TOL)[0]
        raise RowSumError(f"row ({x},{a}) of T sums to {sums[x, a]!r}")
    T[admissible] /= sums[admissible][:, None]

    costs = np.full((m.n_costs, n + 2, n_act), np.inf)
    costs[:, :n] = tm.shifted_costs[:, :n] / denom[None]
    # one visit to delta carries the shifted running cost for the rest of time
    costs[:, delta, 0] = tm.shifted_costs[:, delta, 0] / tm.residual_discount
    costs[:, x_inf, 0] = 0.0
    costs = np.where(admissible[None], costs, np.inf)

    labels = tuple(m.labels) + ("delta", "x_inf")
    return DtmdpModel(
        labels=labels,
        kernel=T,
        costs=costs,
        admissible=admissible,
        alpha=alpha,
        rho=rho,
        w=w.copy(),
        exit_rates=m.exit_rates.copy(),
        shift=tm.shift,
        bounds=np.array(m.bounds, dtype=float),
        initial=m.initial,
        cert=cert,
    )


def reduce_model(m: CtmdpModel, cert: DriftCertificate) -> DtmdpModel:
    """Transform and reduce in one step."""
    return build_dtmdp(build_w_transform(m, cert), m, cert)


def survival_factor(d: DtmdpModel) -> float:
    """``max (q_x(a) + rho) / (q_x(a) + alpha)`` over admissible pairs in ``S``."""
    adm = d.admissible[: d.n_states]
    ratio = (d.exit_rates + d.rho) / (d.exit_rates + d.alpha)
    return float(np.max(np.where(adm, ratio, -np.inf)))
