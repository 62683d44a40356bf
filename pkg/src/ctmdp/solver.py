"""Solvers for the reduced total-cost DTMDP.

Tie-breaking is always by lowest action index.
"""

from __future__ import annotations

import itertools
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceeded, DivergenceGuard, Infeasible, NoAdmissibleAction, SingularSystem, Unbounded
from .policies import DeterministicPolicy, StationaryPolicy
from .reduction import DtmdpModel, survival_factor
from .simplex import linprog_simplex
from .transform import back_transform_value

_TIE_TOL = 1e-12
DEFAULT_EPS = 1e-9
DEFAULT_CAP = 10**6


@dataclass
class ValueFunction:
    """Values on ``S + {delta, x_inf}`` at the DTMDP scale."""

    values: np.ndarray

    def ctmdp(self, d: DtmdpModel) -> np.ndarray:
        return back_transform_value(self.values, d.cert, d.shift, d.residual_discount)


@dataclass
class OccupationMeasure:
    """Expected visit counts ``mu[x, a]`` for ``x`` in ``S + {delta}``."""

    mu: np.ndarray


@dataclass
class SolveReport:
    iterations: int = 0
    delta: float = 0.0
    beta: float = float("nan")
    error_bound: float = 0.0
    lp_status: str | None = None
    objective: float | None = None
    constraint_values: list = field(default_factory=list)
    runtime: float = 0.0

    def to_json(self, with_runtime: bool = False) -> dict:
        out = {
            "iterations": self.iterations,
            "delta": self.delta,
            "beta": self.beta,
            "error_bound": self.error_bound,
        }
        if self.lp_status is not None:
            out.update(lp_status=self.lp_status, objective=self.objective, constraint_values=list(self.constraint_values))
        if with_runtime:
            out["runtime"] = self.runtime
        return out


def _bellman(d: DtmdpModel, V: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        q = d.costs[0] + d.kernel @ V
    return np.where(d.usable, q, np.inf)


def value_iteration(
    d: DtmdpModel, epsilon: float = DEFAULT_EPS, max_iter: int = 1_000_000, ceiling: float = 1e100
) -> tuple[ValueFunction, SolveReport]:
    """Iterate from ``V = 0`` until ``beta * change / (1 - beta) <= epsilon``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    t0 = time.perf_counter()
    beta = survival_factor(d)
    V = np.zeros(d.kernel.shape[0])
    change = math.inf
    it = 0
    while it < max_iter:
        it += 1
        V_new = _bellman(d, V).min(axis=1)
        if np.any(~(V_new <= ceiling)):
            bad = [d.labels[x] for x in np.flatnonzero(~(V_new <= ceiling))]
            raise DivergenceGuard(f"value exceeds {ceiling:g} at states {bad}")
        change = float(np.max(np.abs(V_new - V)))
        V = V_new
        if beta * change / (1.0 - beta) <= epsilon:
            break
    report = SolveReport(
        iterations=it,
        delta=change,
        beta=beta,
        error_bound=beta * change / (1.0 - beta),
        runtime=time.perf_counter() - t0,
    )
    return ValueFunction(V), report


def extract_greedy_policy(d: DtmdpModel, V) -> DeterministicPolicy:
    values = V.values if isinstance(V, ValueFunction) else np.asarray(V, dtype=float)
    q = _bellman(d, values)[: d.n_states]
    choice = np.empty(d.n_states, dtype=int)
    for x in range(d.n_states):
        row = q[x]
        best = row.min()
        if not np.isfinite(best):
            raise NoAdmissibleAction(f"every action at state {d.labels[x]!r} has infinite cost")
        tol = _TIE_TOL * max(1.0, abs(best))
        choice[x] = int(np.flatnonzero(row <= best + tol)[0])
    return DeterministicPolicy(choice)


def _extended_probs(d: DtmdpModel, policy) -> np.ndarray:
    probs = np.zeros((d.kernel.shape[0], d.n_actions))
    probs[: d.n_states] = policy.to_stationary(d.n_actions).probs
    probs[d.n_states :, 0] = 1.0
    if np.any((probs > 0) & ~d.admissible):
        x, a = np.argwhere((probs > 0) & ~d.admissible)[0]
        raise ValueError(f"policy uses action {a} outside A({d.labels[x]!r})")
    return probs


def _mix(probs: np.ndarray, table: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        return np.where(probs > 0, probs * table, 0.0).sum(axis=-1)


def _solve_transient(Tp: np.ndarray, Cp: np.ndarray) -> np.ndarray:
    """Solve ``V = C + T V`` on ``S + {delta}`` (leading block); ``V(x_inf) = 0``."""
    k = Tp.shape[-1] - 1
    A = np.eye(k) - Tp[..., :k, :k]
    b = Cp[..., :k]
    out = np.zeros(Cp.shape)
    if np.all(np.isfinite(b)):
        try:
            out[..., :k] = np.linalg.solve(A, b[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from None
        return out
    if Tp.ndim != 2:
        return np.stack([_solve_transient(t, c) for t, c in zip(Tp, Cp)])
    bad = ~np.isfinite(b)
    hit = bad.copy()
    adj = Tp[:k, :k] > 0
    while True:
        new = hit | adj[:, hit].any(axis=1)
        if np.array_equal(new, hit):
            break
        hit = new
    out[:k][hit] = np.inf
    ok = ~hit
    if ok.any():
        out[:k][ok] = np.linalg.solve(A[np.ix_(ok, ok)], b[ok])
    return out


def policy_evaluation(d: DtmdpModel, policy, cost_index: int = 0) -> ValueFunction:
    """Exact total cost by a dense linear solve."""
    probs = _extended_probs(d, policy)
    Tp = np.einsum("xa,xay->xy", probs, d.kernel)
    Cp = _mix(probs, d.costs[cost_index])
    k = Tp.shape[0] - 1
    if np.linalg.cond(np.eye(k) - Tp[:k, :k]) > 1e14:
        raise SingularSystem("I - T_p is numerically singular")
    return ValueFunction(_solve_transient(Tp, Cp))


# ---------------------------------------------------------------------------
# constrained problem


def solve_constrained_lp(
    d: DtmdpModel, bounds=None, x0: int | None = None
) -> tuple[StationaryPolicy, OccupationMeasure, SolveReport]:
    """Occupation-measure LP for one initial state; ``bounds`` are on the DTMDP scale."""
    t0 = time.perf_counter()
    x0 = d.initial if x0 is None else int(x0)
    if bounds is None:
        bounds = d.scaled_bounds(x0)
    bounds = np.asarray(bounds, dtype=float).reshape(-1)
    if bounds.size != d.n_costs - 1:
        raise ValueError(f"need {d.n_costs - 1} bounds, got {bounds.size}")
    n_tr = d.n_states + 1  # S + delta
    finite = d.admissible[:n_tr] & np.all(np.isfinite(d.costs[:, :n_tr]), axis=0)
    cols = np.argwhere(finite)  # rows (x, a), lexicographic
    xs, acts = cols[:, 0], cols[:, 1]
    T = d.kernel[xs, acts, :n_tr]  # (k, n_tr)
    A_eq = -T.T.copy()
    A_eq[xs, np.arange(len(xs))] += 1.0
    b_eq = np.zeros(n_tr)
    b_eq[x0] = 1.0
    C = d.costs[:, xs, acts]
    active = np.isfinite(bounds)
    res = linprog_simplex(C[0], A_eq, b_eq, C[1:][active], bounds[active])
    if res.status == "infeasible":
        raise Infeasible(f"no occupation measure meets the constraints from state {d.labels[x0]!r}")
    if res.status == "unbounded":
        raise Unbounded("LP unbounded although costs are nonnegative")
    if res.status != "optimal":
        raise SingularSystem(f"simplex stopped: {res.status}")

    mu = np.zeros((n_tr, d.n_actions))
    mu[xs, acts] = res.x
    probs = np.zeros((d.n_states, d.n_actions))
    for x in range(d.n_states):
        mass = mu[x].sum()
        if mass > 1e-12:
            probs[x] = mu[x] / mass
        else:
            allowed = np.flatnonzero(finite[x])
            if allowed.size == 0:
                allowed = np.flatnonzero(d.usable[x])
            if allowed.size == 0:
                raise NoAdmissibleAction(f"no admissible action at state {d.labels[x]!r}")
            probs[x, allowed[0]] = 1.0
    report = SolveReport(
        iterations=res.iterations,
        beta=survival_factor(d),
        lp_status=res.status,
        objective=res.fun,
        constraint_values=[float(v) for v in C[1:] @ res.x],
        runtime=time.perf_counter() - t0,
    )
    return StationaryPolicy(probs), OccupationMeasure(mu), report


# ---------------------------------------------------------------------------
# brute force


@dataclass
class BruteForceResult:
    values: np.ndarray
    policy: DeterministicPolicy
    n_policies: int
    simultaneous: bool


def _action_lists(d: DtmdpModel) -> list[np.ndarray]:
    lists = [np.flatnonzero(d.usable[x]) for x in range(d.n_states)]
    for x, acts in enumerate(lists):
        if acts.size == 0:
            raise NoAdmissibleAction(f"every action at state {d.labels[x]!r} has infinite cost")
    return lists


def _decode(indices: np.ndarray, lists: list[np.ndarray]) -> np.ndarray:
    """Mixed-radix decode, first state most significant."""
    out = np.empty((len(indices), len(lists)), dtype=int)
    rem = np.asarray(indices, dtype=np.int64).copy()
    for x in range(len(lists) - 1, -1, -1):
        k = len(lists[x])
        out[:, x] = lists[x][rem % k]
        rem //= k
    return out


def evaluate_deterministic(d: DtmdpModel, choices: np.ndarray, cost_index: int = 0) -> np.ndarray:
    """Values of a batch of deterministic policies, shape ``(B, n+2)``."""
    choices = np.atleast_2d(choices)
    B, n = choices.shape
    rows = np.arange(n)
    Tp = np.empty((B, n + 2, n + 2))
    Cp = np.empty((B, n + 2))
    Tp[:, :n] = d.kernel[rows, choices]
    Cp[:, :n] = d.costs[cost_index][rows, choices]
    Tp[:, n:] = d.kernel[n:, 0]
    Cp[:, n:] = d.costs[cost_index][n:, 0]
    return _solve_transient(Tp, Cp)


def count_policies(d: DtmdpModel) -> int:
    return math.prod(len(a) for a in _action_lists(d))


def all_deterministic(d: DtmdpModel, cap: int = DEFAULT_CAP) -> np.ndarray:
    lists = _action_lists(d)
    total = math.prod(len(a) for a in lists)
    if total > cap:
        raise CapExceeded(f"{total} deterministic policies exceed the cap {cap}")
    return _decode(np.arange(total), lists)


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("CTMDP_THREADS")
    n = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def enumerate_bruteforce(
    d: DtmdpModel, cap: int = DEFAULT_CAP, workers: int | None = None, chunk: int = 4096
) -> BruteForceResult:
    """Pointwise minimum over every deterministic stationary policy."""
    lists = _action_lists(d)
    total = math.prod(len(a) for a in lists)
    if total > cap:
        raise CapExceeded(f"{total} deterministic policies exceed the cap {cap}")
    starts = list(range(0, total, chunk))

    def chunk_min(start):
        idx = np.arange(start, min(start + chunk, total))
        return evaluate_deterministic(d, _decode(idx, lists)).min(axis=0)

    n_workers = worker_count(workers)
    if n_workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            mins = list(pool.map(chunk_min, starts))
    else:
        mins = [chunk_min(s) for s in starts]
    best = np.min(np.stack(mins), axis=0)

    # lowest enumeration index attaining the minimum everywhere, else at x0
    tol = 1e-10 * np.maximum(1.0, np.abs(best))
    chosen = None
    fallback = None
    for s in starts:
        idx = np.arange(s, min(s + chunk, total))
        choices = _decode(idx, lists)
        vals = evaluate_deterministic(d, choices)
        hit = np.all(vals <= best + tol, axis=1)
        if hit.any():
            chosen = choices[int(np.flatnonzero(hit)[0])]
            break
        if fallback is None:
            at0 = vals[:, d.initial] <= best[d.initial] + tol[d.initial]
            if at0.any():
                fallback = choices[int(np.flatnonzero(at0)[0])]
    policy = chosen if chosen is not None else fallback
    return BruteForceResult(best, DeterministicPolicy(policy), total, chosen is not None)


def product_policies(d: DtmdpModel):
    """Iterate deterministic policies in enumeration order (small models)."""
    for combo in itertools.product(*_action_lists(d)):
        yield DeterministicPolicy(np.array(combo))
