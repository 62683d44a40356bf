"""Monte-Carlo simulation of the controlled jump process under stationary policies.

Trajectory ``k`` of a run with master seed ``s`` draws from
``numpy.random.default_rng([s, k])``, so estimates do not depend on how
trajectories are spread over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .conditions import DriftCertificate, check_condition1, drift_sums
from .errors import InfiniteCost
from .model import CtmdpModel, _reachable_from
from .solver import worker_count

TAIL_FRACTION = 1e-4


@dataclass
class Trajectory:
    jumps: list  # (t_n, x_n, a_n)
    terminal: str  # "horizon-capped" | "absorbed"


@dataclass
class DiscountedCostEstimate:
    mean: float
    standard_error: float
    trajectories: int
    tail_bound: float
    horizon: float
    seed: int

    def to_json(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.standard_error,
            "tail_bound": self.tail_bound,
            "n": self.trajectories,
            "seed": self.seed,
            "horizon": self.horizon,
        }


class _Sampler:
    """Mixed-generator law of the next (sojourn, state) under a stationary policy."""

    def __init__(self, m: CtmdpModel, policy):
        probs = policy.to_stationary(m.n_actions).probs
        self.probs_cum = np.cumsum(probs, axis=1)
        off = np.einsum("xa,xay->xy", probs, m.rate_matrix)
        np.fill_diagonal(off, 0.0)
        self.rate = off.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            jump = np.where(self.rate[:, None] > 0, off / self.rate[:, None], 0.0)
        self.jump_cum = np.cumsum(jump, axis=1)
        self.jump_cum[:, -1] = np.where(self.rate > 0, 1.0, 0.0)
        self.off = off

    def action(self, rng, x: int) -> int:
        row = self.probs_cum[x]
        return int(min(np.searchsorted(row, rng.random() * row[-1], side="right"), len(row) - 1))

    def step(self, rng, x: int):
        """Return (sojourn, next state); ``(inf, x)`` when ``x`` is absorbing."""
        r = self.rate[x]
        if r <= 0.0:
            return math.inf, x
        theta = rng.standard_exponential() / r
        y = int(np.searchsorted(self.jump_cum[x], rng.random(), side="right"))
        return theta, min(y, len(self.rate) - 1)


def _rng(seed: int, index: int):
    return np.random.default_rng([int(seed), int(index)])


def simulate_trajectory(m: CtmdpModel, policy, x0: int, horizon: float, seed: int = 0, index: int = 0) -> Trajectory:
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    sampler = _Sampler(m, policy)
    rng = _rng(seed, index)
    t, x = 0.0, int(x0)
    jumps = []
    while True:
        a = sampler.action(rng, x)
        jumps.append((t, x, a))
        theta, y = sampler.step(rng, x)
        if math.isinf(theta):
            return Trajectory(jumps, "absorbed")
        if t + theta >= horizon:
            return Trajectory(jumps, "horizon-capped")
        t, x = t + theta, y


def _path_integral(sampler: _Sampler, rate_fn: np.ndarray, alpha: float, x0: int, horizon: float, rng) -> float:
    t, x = 0.0, x0
    total = 0.0
    cap = math.exp(-alpha * horizon)
    while True:
        sampler.action(rng, x)
        theta, y = sampler.step(rng, x)
        start = math.exp(-alpha * t)
        end_t = t + theta
        if end_t >= horizon:
            total += rate_fn[x] * (start - cap) / alpha
            return total
        total += rate_fn[x] * (start - math.exp(-alpha * end_t)) / alpha
        t, x = end_t, y


def _run(m, policy, x0, rate_fn, n_traj, horizon, seed, workers) -> np.ndarray:
    sampler = _Sampler(m, policy)
    alpha = m.alpha
    values = np.empty(n_traj)

    def work(lo, hi):
        for k in range(lo, hi):
            values[k] = _path_integral(sampler, rate_fn, alpha, x0, horizon, _rng(seed, k))

    n_workers = min(worker_count(workers), max(1, n_traj))
    bounds = np.linspace(0, n_traj, n_workers + 1).astype(int)
    if n_workers == 1:
        work(0, n_traj)
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            list(pool.map(lambda i: work(bounds[i], bounds[i + 1]), range(n_workers)))
    return values


def _summary(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def default_horizon(alpha: float, rho: float) -> float:
    """Horizon at which the tail bound is ``1e-4`` of the value scale ``L w(x0)/(alpha-rho)``."""
    return math.log(1.0 / TAIL_FRACTION) / (alpha - rho)


def estimate_discounted_cost(
    m: CtmdpModel,
    policy,
    x0: int,
    cost_index: int = 0,
    n_traj: int = 10_000,
    horizon: float | None = None,
    seed: int = 0,
    cert: DriftCertificate | None = None,
    workers: int | None = None,
) -> DiscountedCostEstimate:
    """Sample mean of the discounted cost truncated at ``horizon``.

    The tail bound uses ``max(L, sup |c_pi| / w)`` so it covers both signs
    of the running cost.
    """
    cert = cert if cert is not None else check_condition1(m, np.ones(m.n_states))
    probs = policy.to_stationary(m.n_actions).probs
    cost = m.cost_array[cost_index]
    used_inf = np.any((probs > 0) & ~np.isfinite(cost), axis=1)
    if used_inf.any():
        reach = _reachable_from(m.generator(policy) > 0, used_inf)
        if reach[x0]:
            raise InfiniteCost(f"policy uses an infinite-cost action reachable from {m.labels[x0]!r}")
    rate_fn = m.mixed_cost(policy, cost_index)
    rate_fn = np.where(np.isfinite(rate_fn), rate_fn, 0.0)
    gap = m.alpha - cert.rho
    horizon = default_horizon(m.alpha, cert.rho) if horizon is None else float(horizon)
    L_abs = max(cert.L, float(np.max(np.abs(rate_fn) / cert.w)))
    tail = L_abs * cert.w[x0] * math.exp(-gap * horizon) / gap
    values = _run(m, policy, int(x0), rate_fn, n_traj, horizon, seed, workers)
    mean, se = _summary(values)
    return DiscountedCostEstimate(mean, se, n_traj, tail, horizon, seed)


def estimate_w_integral(
    m: CtmdpModel,
    policy,
    x0: int,
    w,
    n_traj: int = 10_000,
    horizon: float | None = None,
    seed: int = 0,
    workers: int | None = None,
) -> DiscountedCostEstimate:
    """Estimate ``E int_0^inf e^{-alpha t} w(xi_t) dt``."""
    w = np.asarray(w, dtype=float)
    ratio = np.where(m.admissible, drift_sums(m, w) / w[:, None], -np.inf)
    rho = max(float(ratio.max()), 1e-6)
    gap = m.alpha - rho
    if horizon is None:
        horizon = default_horizon(m.alpha, rho) if gap > 0 else 50.0 / m.alpha
    tail = w[x0] * math.exp(-gap * horizon) / gap if gap > 0 else math.inf
    values = _run(m, policy, int(x0), w, n_traj, float(horizon), seed, workers)
    mean, se = _summary(values)
    return DiscountedCostEstimate(mean, se, n_traj, tail, float(horizon), seed)


def sojourn_samples(m: CtmdpModel, policy, x: int, n: int, seed: int = 0) -> np.ndarray:
    """First sojourn times out of ``x`` over ``n`` independent streams."""
    sampler = _Sampler(m, policy)
    out = np.empty(n)
    for k in range(n):
        rng = _rng(seed, k)
        sampler.action(rng, x)
        out[k] = sampler.step(rng, x)[0]
    return out


def trajectories_csv(m: CtmdpModel, policy, x0: int, horizon: float, seed: int, count: int) -> str:
    lines = ["trajectory,t,state,action"]
    for k in range(count):
        tr = simulate_trajectory(m, policy, x0, horizon, seed, index=k)
        for t, x, a in tr.jumps:
            lines.append(f"{k},{float(t)!r},{m.labels[x]},{a}")
    return "\n".join(lines) + "\n"
