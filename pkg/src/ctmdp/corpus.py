"""Reference instances: closed-form chains, the pure-birth family, seeded random models."""

from __future__ import annotations

import numpy as np

from .conditions import DriftCertificate, check_condition1, drift_sums
from .model import CtmdpModel, ModelFamily, build_family


def single_state(cost: float = 5.0, alpha: float = 1.0) -> CtmdpModel:
    return CtmdpModel.from_arrays(np.zeros((1, 1, 1)), [[[cost]]], alpha)


def two_state(lam: float = 1.0, alpha: float = 2.0, costs=(1.0, 3.0)) -> CtmdpModel:
    """State 0 jumps to the absorbing state 1 at rate ``lam``."""
    rates = np.zeros((2, 1, 2))
    rates[0, 0, 1] = lam
    return CtmdpModel.from_arrays(rates, np.array(costs, dtype=float)[None, :, None], alpha)


def pure_birth(M: int = 8, coef: float = 2.0, power: float = 1.0, alpha: float = 2.0, costs=None) -> CtmdpModel:
    fam = ModelFamily("pure_birth", {"birth_coef": coef, "birth_power": power}, M)
    return build_family(fam, costs=costs, alpha=alpha)


def lp_example() -> CtmdpModel:
    """One state, two actions: ``c_0 = (1, 0)``, ``c_1 = (0, 2)``, ``d_1 = 1``."""
    costs = np.array([[[1.0, 0.0]], [[0.0, 2.0]]])
    return CtmdpModel.from_arrays(np.zeros((1, 2, 1)), costs, 1.0, bounds=[1.0])


def random_instance(
    seed: int,
    max_states: int = 6,
    max_actions: int = 3,
    n_constraints: int = 1,
    negative_costs: bool = True,
) -> tuple[CtmdpModel, DriftCertificate]:
    """A random finite CTMDP with a random valid drift certificate."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_states + 1))
    n_act = int(rng.integers(1, max_actions + 1))
    adm = rng.random((n, n_act)) < 0.75
    for x in range(n):
        if not adm[x].any():
            adm[x, rng.integers(n_act)] = True
    rates = np.where(rng.random((n, n_act, n)) < 0.6, rng.uniform(0.0, 2.0, (n, n_act, n)), 0.0)
    for x in range(n):
        rates[x, :, x] = 0.0
    low = -2.0 if negative_costs else 0.0
    costs = rng.uniform(low, 5.0, (1 + n_constraints, n, n_act))
    w = rng.uniform(1.0, 3.0, n)

    probe = CtmdpModel.from_arrays(rates, costs, 1.0, admissible=adm)
    ratio = np.where(probe.admissible, drift_sums(probe, w) / w[:, None], -np.inf).max()
    rho_att = max(float(ratio), 1e-6)
    alpha = rho_att * rng.uniform(1.1, 2.0) + rng.uniform(0.2, 1.5)
    rho = rho_att + rng.uniform(0.0, 0.6) * (alpha - rho_att)
    bounds = rng.uniform(0.0, 3.0, n_constraints)
    m = CtmdpModel.from_arrays(rates, costs, alpha, admissible=adm, bounds=bounds)
    return m, check_condition1(m, w, rho=rho)


def random_corpus(count: int = 50, base_seed: int = 20240601, **kwargs) -> list[tuple[CtmdpModel, DriftCertificate]]:
    return [random_instance(base_seed + k, **kwargs) for k in range(count)]


def standard_corpus() -> list[tuple[str, CtmdpModel, DriftCertificate]]:
    """Named instances used by ``verify`` when no model is given."""
    out = []
    m = single_state()
    out.append(("single_state", m, check_condition1(m, [1.0], rho=0.5)))
    m = two_state()
    out.append(("two_state", m, check_condition1(m, [1.0, 2.0], rho=1.5)))
    m = pure_birth(8, costs=[lambda x: float(x)])
    out.append(("pure_birth_2x_M8", m, check_condition1(m, np.ones(8), rho=1.0)))
    for k in range(3):
        name = f"random_{k}"
        m, cert = random_instance(7000 + k)
        out.append((name, m, cert))
    return out
