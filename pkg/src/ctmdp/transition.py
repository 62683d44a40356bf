"""Transition functions of finite Q-functions.

The minimal (Feller) series counts trajectories by number of jumps::

    p0(s,x,t,.)   = delta_x exp(-int_s^t q_x)
    p(n+1)(s,x,t) = int_s^t exp(-int_s^u q_x) sum_z qt(z|x,u) p(n)(u,z,t) du

Time dependence is piecewise constant. The inner integrals use composite
Gauss-Legendre panels; inside a panel ``p(n)(u, ., t, .)`` is smooth in
``u`` and is represented by its values at the panel nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import QuadratureError
from .model import CtmdpModel, ModelFamily, family_rates

DEFAULT_NMAX = 64
DEFAULT_QUAD = 8
LAYER_TOL = 1e-14
PANEL_SCALE = 0.1


@dataclass(frozen=True, eq=False)
class QFunction:
    """Piecewise-constant Q-function on ``n`` states.

    Piece ``k`` is active on ``[times[k], times[k+1])``. ``exits[k, x]``
    may exceed the off-diagonal row sum; the surplus is mass leaving the
    finite state set (leaky truncation).
    """

    times: np.ndarray
    offdiag: np.ndarray
    exits: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        off = np.array(self.offdiag, dtype=float)
        exits = np.array(self.exits, dtype=float)
        if off.ndim == 2:
            off = off[None]
        if exits.ndim == 1:
            exits = exits[None]
        if times[0] != 0.0 or np.any(np.diff(times) <= 0) or len(times) != off.shape[0]:
            raise ValueError("piece start times must begin at 0 and increase")
        for k in range(off.shape[0]):
            np.fill_diagonal(off[k], 0.0)
        if np.any(off < 0) or not np.all(np.isfinite(off)):
            raise ValueError("off-diagonal rates must be finite and nonnegative")
        if np.any(exits < off.sum(axis=2) - 1e-12 * np.maximum(1.0, exits)):
            raise ValueError("exit rate below the off-diagonal row sum")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "offdiag", off)
        object.__setattr__(self, "exits", exits)

    @classmethod
    def from_generator(cls, Q) -> "QFunction":
        Q = np.asarray(Q, dtype=float)
        off = Q.copy()
        np.fill_diagonal(off, 0.0)
        return cls([0.0], off, -np.diag(Q))

    @classmethod
    def piecewise(cls, times, generators) -> "QFunction":
        gens = [np.asarray(G, dtype=float) for G in generators]
        off = np.stack([G - np.diag(np.diag(G)) for G in gens])
        exits = np.stack([-np.diag(G) for G in gens])
        return cls(times, off, exits)

    @property
    def n_states(self) -> int:
        return self.offdiag.shape[1]

    @property
    def homogeneous(self) -> bool:
        return self.offdiag.shape[0] == 1

    @property
    def bound(self) -> float:
        return float(self.exits.max(initial=0.0))

    @property
    def conservative(self) -> bool:
        return bool(np.allclose(self.exits, self.offdiag.sum(axis=2), rtol=1e-12, atol=1e-12))

    def piece_at(self, s: float) -> int:
        return int(np.searchsorted(self.times, s, side="right") - 1)

    def evaluate(self, x: int, s: float) -> np.ndarray:
        """Signed rate row ``q(.|x, s)``."""
        k = self.piece_at(s)
        row = self.offdiag[k, x].copy()
        row[x] = -self.exits[k, x]
        return row

    def generator(self, k: int = 0) -> np.ndarray:
        return self.offdiag[k] - np.diag(self.exits[k])


def policy_qfunction(m: CtmdpModel, policy) -> QFunction:
    return QFunction.from_generator(m.generator(policy))


def truncated_qfunction(f: ModelFamily, leaky: bool = False) -> QFunction:
    """Family chain truncated at level M.

    Absorbing mode is the conservative model of ``build_family``; leaky mode
    keeps the top state's birth intensity but discards its target, so the
    defect measures mass escaping past the truncation.
    """
    if not leaky:
        return QFunction.from_generator(_generator(family_rates(f)))
    reflect = ModelFamily(f.kind, f.rate_parameters, f.truncation, "reflecting")
    off = family_rates(reflect)
    exits = off.sum(axis=1)
    if f.kind != "explicit":
        exits[-1] += f.birth(f.labels[-1])
    return QFunction([0.0], off, exits)


def _generator(off: np.ndarray) -> np.ndarray:
    return off - np.diag(off.sum(axis=1))


@lru_cache(maxsize=8)
def _panel_rule(k: int):
    """Normalized nodes, weights and interpolation tables for one panel.

    Start points are ``-1`` and the ``k`` nodes; for each start point the
    sub-interval ``[start, 1]`` gets its own ``k``-point rule whose nodes are
    interpolated from the panel nodes.
    """
    xi, wts = np.polynomial.legendre.leggauss(k)
    starts = np.concatenate([[-1.0], xi])
    sub = starts[:, None] + (1.0 - starts[:, None]) * (xi[None, :] + 1.0) / 2.0
    sub_w = (1.0 - starts[:, None]) / 2.0 * wts[None, :]
    # Lagrange basis of the panel nodes evaluated at the sub-nodes
    L = np.ones(sub.shape + (k,))
    for i in range(k):
        for j in range(k):
            if i != j:
                L[..., i] *= (sub - xi[j]) / (xi[i] - xi[j])
    return xi, starts, sub, sub_w, L


@dataclass
class FellerSeriesResult:
    partial_sums: list
    total: np.ndarray
    defect: np.ndarray
    layers: int


def _panels(q: QFunction, s: float, t: float, width: float):
    cuts = [s] + [float(b) for b in q.times if s < b < t] + [t]
    edges = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        k = max(1, math.ceil((b - a) / width - 1e-12)) if width > 0 else 1
        edges.extend(np.linspace(a, b, k + 1)[:-1])
    edges.append(t)
    edges = np.array(edges)
    pieces = np.array([q.piece_at(0.5 * (a + b)) for a, b in zip(edges[:-1], edges[1:])])
    return edges, pieces


def feller_series(
    q: QFunction,
    s: float,
    t: float,
    n_max: int = DEFAULT_NMAX,
    quad_points: int = DEFAULT_QUAD,
    panel_width: float | None = None,
) -> FellerSeriesResult:
    """Partial sums ``p(0..n)(s, ., t, .)`` of the minimal transition function."""
    if t < s:
        raise ValueError("need s <= t")
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    n = q.n_states
    eye = np.eye(n)
    if t == s:
        return FellerSeriesResult([eye.copy()], eye.copy(), np.zeros(n), 0)

    bound = q.bound
    if panel_width is None:
        panel_width = PANEL_SCALE / bound if bound > 0 else (t - s)
    edges, pieces = _panels(q, s, t, panel_width)
    a, b = edges[:-1], edges[1:]
    h = b - a  # (P,)
    P = len(h)
    e = q.exits[pieces]  # (P, n)
    K = q.offdiag[pieces]  # (P, n, n)

    xi, starts, sub, sub_w, L = _panel_rule(quad_points)
    half = h / 2.0
    start_t = a[:, None] + half[:, None] * (starts[None, :] + 1.0)  # (P, k+1)
    sub_t = a[:, None, None] + half[:, None, None] * (sub[None] + 1.0)  # (P, k+1, k)
    weights = half[:, None, None] * sub_w[None]  # (P, k+1, k)
    # exp(-e_x (tau - u)) for sub-nodes, and exp(-e_x (b - u)) for start points
    decay_sub = np.exp(-e[:, None, None, :] * (sub_t - start_t[:, :, None])[..., None])  # (P,k+1,k,n)
    factor = weights[..., None] * decay_sub
    decay_end = np.exp(-e[:, None, :] * (b[:, None] - start_t)[..., None])  # (P, k+1, n)

    # p0 at every start point: exp(-int_u^t q_x)
    seg = e * h[:, None]
    tail = np.concatenate([np.cumsum(seg[::-1], axis=0)[::-1][1:], np.zeros((1, n))])  # later panels
    lam = e[:, None, :] * (b[:, None] - start_t)[..., None] + tail[:, None, :]  # (P, k+1, n)
    layer = np.zeros((P, quad_points + 1, n, n))
    idx = np.arange(n)
    layer[:, :, idx, idx] = np.exp(-lam)

    partial = [layer[0, 0].copy()]
    total = partial[0].copy()
    n_done = 0
    for _ in range(n_max):
        nodes = layer[:, 1:]  # (P, k, n, n) values at panel nodes
        interp = np.einsum("umi,pixy->pumxy", L, nodes)
        jumped = np.einsum("pxz,pumzy->pumxy", K, interp)
        local = np.einsum("pumx,pumxy->puxy", factor, jumped)  # (P, k+1, n, n)
        new = np.empty_like(layer)
        G = np.zeros((n, n))  # p(n+1)(t) = 0
        for p in range(P - 1, -1, -1):
            new[p] = local[p] + decay_end[p][:, :, None] * G
            G = new[p, 0]
        if not np.all(np.isfinite(new)):
            raise QuadratureError("non-finite value in Feller layer")
        layer = new
        n_done += 1
        partial.append(layer[0, 0].copy())
        total += layer[0, 0]
        if np.abs(layer).max() < LAYER_TOL:
            break
    defect = 1.0 - total.sum(axis=1)
    return FellerSeriesResult(partial, total, defect, n_done)


def uniformization(q: QFunction, t: float, tail_tol: float = 1e-14) -> np.ndarray:
    """``exp(tQ)`` as a Poisson mixture of powers of ``I + Q / Lambda``."""
    if not q.homogeneous:
        raise ValueError("uniformization needs a homogeneous Q-function")
    n = q.n_states
    lam = q.bound
    if lam == 0.0 or t == 0.0:
        return np.eye(n)
    Q = q.generator(0)
    Pm = np.eye(n) + Q / lam
    mu = lam * t
    log_mu = math.log(mu)
    k_cap = int(mu + 50.0 * math.sqrt(mu) + 200)
    out = np.zeros((n, n))
    power = np.eye(n)
    cum = 0.0
    for k in range(k_cap + 1):
        wk = math.exp(-mu + k * log_mu - math.lgamma(k + 1))
        out += wk * power
        cum += wk
        if k > mu and (1.0 - cum < tail_tol or wk < 1e-300):
            break
        power = power @ Pm
    return out


def honesty_defect(q: QFunction, t: float, n_max: int = DEFAULT_NMAX, s: float = 0.0) -> np.ndarray:
    """``1 - p(s, x, t, S)`` per state from the truncated series."""
    return feller_series(q, s, t, n_max=n_max).defect


def kc_residual(q: QFunction, s: float, t: float, u: float, n_max: int = DEFAULT_NMAX) -> float:
    """Max entry of ``|p(s,t) p(t,u) - p(s,u)|``."""
    if not s <= t <= u:
        raise ValueError("need s <= t <= u")
    p_st = feller_series(q, s, t, n_max=n_max).total
    p_tu = feller_series(q, t, u, n_max=n_max).total
    p_su = feller_series(q, s, u, n_max=n_max).total
    return float(np.max(np.abs(p_st @ p_tu - p_su)))
