"""Dense two-phase tableau simplex with Bland's anti-cycling rule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded" | "iteration_limit"
    x: np.ndarray | None
    fun: float
    iterations: int


def _pivot(tab: np.ndarray, basis: list, r: int, j: int) -> None:
    tab[r] /= tab[r, j]
    col = tab[:, j].copy()
    col[r] = 0.0
    tab -= np.outer(col, tab[r])
    basis[r] = j


def _run(tab: np.ndarray, basis: list, n_cols: int, max_iter: int) -> tuple[str, int]:
    """Minimize the objective in the last row over the first ``n_cols`` columns."""
    it = 0
    m = tab.shape[0] - 1
    while it < max_iter:
        cost = tab[-1, :n_cols]
        entering = np.flatnonzero(cost < -PIVOT_TOL)
        if entering.size == 0:
            return "optimal", it
        j = int(entering[0])
        col = tab[:m, j]
        pos = col > PIVOT_TOL
        if not pos.any():
            return "unbounded", it
        ratios = np.full(m, np.inf)
        ratios[pos] = tab[:m, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))
        r = int(min(ties, key=lambda k: basis[k]))
        _pivot(tab, basis, r, j)
        it += 1
    return "iteration_limit", it


def linprog_simplex(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, max_iter: int = 50_000) -> LPResult:
    """``min c.x`` subject to ``A_eq x = b_eq``, ``A_ub x <= b_ub``, ``x >= 0``."""
    c = np.asarray(c, dtype=float)
    n = c.size
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    m_eq, m_ub = A_eq.shape[0], A_ub.shape[0]
    m = m_eq + m_ub
    n_std = n + m_ub  # structural + slack columns

    A = np.zeros((m, n_std))
    A[:m_eq, :n] = A_eq
    A[m_eq:, :n] = A_ub
    A[m_eq:, n:] = np.eye(m_ub)
    b = np.concatenate([b_eq, b_ub])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    # phase 1 tableau: [A | I_art | b], objective = sum of artificials
    tab = np.zeros((m + 1, n_std + m + 1))
    tab[:m, :n_std] = A
    tab[:m, n_std : n_std + m] = np.eye(m)
    tab[:m, -1] = b
    tab[-1, :n_std] = -A.sum(axis=0)
    tab[-1, -1] = -b.sum()
    basis = list(range(n_std, n_std + m))

    status, it1 = _run(tab, basis, n_std + m, max_iter)
    if status != "optimal":
        return LPResult(status, None, np.nan, it1)
    if -tab[-1, -1] > FEAS_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
        return LPResult("infeasible", None, np.nan, it1)

    # drive artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if basis[r] >= n_std:
            cand = np.flatnonzero(np.abs(tab[r, :n_std]) > PIVOT_TOL)
            if cand.size:
                _pivot(tab, basis, r, int(cand[0]))
                keep.append(r)
        else:
            keep.append(r)
    rows = keep + [m]
    tab = np.hstack([tab[rows][:, :n_std], tab[rows][:, -1:]])
    basis = [basis[r] for r in keep]

    c_std = np.concatenate([c, np.zeros(m_ub)])
    tab[-1, :] = 0.0
    tab[-1, :n_std] = c_std
    for r, j in enumerate(basis):
        tab[-1] -= c_std[j] * tab[r]

    status, it2 = _run(tab, basis, n_std, max_iter)
    if status != "optimal":
        return LPResult(status, None, np.nan, it1 + it2)
    x = np.zeros(n_std)
    for r, j in enumerate(basis):
        x[j] = tab[r, -1]
    x = np.maximum(x[:n], 0.0)
    return LPResult("optimal", x, float(c @ x), it1 + it2)
