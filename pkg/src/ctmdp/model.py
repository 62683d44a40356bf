"""CTMDP data model, validation, JSON model files and parametric families."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .errors import FamilyError, ParseError, SchemaError, ValidationError
from .policies import DeterministicPolicy, StationaryPolicy

MODEL_KEYS = {
    "states",
    "actions",
    "rates",
    "costs",
    "alpha",
    "bounds",
    "initial",
    "family",
    "certificate",
    # informational keys written by transformed-model dumps
    "delta_state",
    "shift",
}


@dataclass(frozen=True, eq=False)
class RateKernel:
    """Sparse off-diagonal rates ``q(y|x,a)``; the diagonal is always derived."""

    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    rate: np.ndarray

    def __post_init__(self):
        for name, dtype in (("x", int), ("a", int), ("y", int), ("rate", float)):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=dtype).reshape(-1))

    def __len__(self):
        return len(self.rate)

    @classmethod
    def empty(cls) -> "RateKernel":
        return cls([], [], [], [])

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "RateKernel":
        dense = np.asarray(dense, dtype=float)
        x, a, y = np.nonzero(dense)
        keep = x != y
        return cls(x[keep], a[keep], y[keep], dense[x[keep], a[keep], y[keep]])


@dataclass(frozen=True, eq=False)
class CtmdpModel:
    """A finite CTMDP ``{S, A, A(.), q}`` with cost rates ``c_0..c_N``.

    ``costs`` has shape ``(N+1, |S|, n_actions)``; NaN marks an entry that
    was not supplied (read as 0 inside the graph) and ``+inf`` marks a
    forbidden action. States are dense indices; ``labels`` are for display.
    """

    labels: tuple
    action_sets: tuple
    rates: RateKernel
    costs: np.ndarray
    alpha: float
    bounds: tuple = ()
    initial: int = 0

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "action_sets", tuple(tuple(int(a) for a in acts) for acts in self.action_sets))
        costs = np.array(self.costs, dtype=float)
        if costs.ndim == 2:
            costs = costs[None]
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))
        object.__setattr__(self, "initial", int(self.initial))

    @classmethod
    def from_arrays(
        cls,
        rates,
        costs,
        alpha: float,
        admissible=None,
        bounds: Sequence[float] = (),
        initial: int = 0,
        labels: Sequence | None = None,
    ) -> "CtmdpModel":
        """Build from a dense ``(n, nA, n)`` rate array and ``(N+1, n, nA)`` costs.

        Diagonal entries of ``rates`` are ignored.
        """
        rates = np.asarray(rates, dtype=float)
        n, n_act = rates.shape[0], rates.shape[1]
        if admissible is None:
            admissible = np.ones((n, n_act), dtype=bool)
        admissible = np.asarray(admissible, dtype=bool)
        dense = rates * admissible[:, :, None]
        costs = np.array(costs, dtype=float)
        if costs.ndim == 2:
            costs = costs[None]
        costs = np.where(admissible[None], costs, np.nan)
        action_sets = [tuple(int(a) for a in np.flatnonzero(admissible[x])) for x in range(n)]
        return cls(
            labels=tuple(labels) if labels is not None else tuple(range(n)),
            action_sets=tuple(action_sets),
            rates=RateKernel.from_dense(dense),
            costs=costs,
            alpha=alpha,
            bounds=tuple(bounds),
            initial=initial,
        )

    @property
    def n_states(self) -> int:
        return len(self.labels)

    @property
    def n_actions(self) -> int:
        return self.costs.shape[2]

    @property
    def n_costs(self) -> int:
        return self.costs.shape[0]

    @cached_property
    def admissible(self) -> np.ndarray:
        mask = np.zeros((self.n_states, self.n_actions), dtype=bool)
        for x, acts in enumerate(self.action_sets):
            for a in acts:
                if 0 <= a < self.n_actions:
                    mask[x, a] = True
        return mask

    @cached_property
    def rate_matrix(self) -> np.ndarray:
        """Dense off-diagonal rates, shape ``(n, nA, n)``."""
        n, n_act = self.n_states, self.n_actions
        dense = np.zeros((n, n_act, n))
        r = self.rates
        ok = (
            (r.x >= 0) & (r.x < n) & (r.y >= 0) & (r.y < n) & (r.a >= 0) & (r.a < n_act) & (r.x != r.y)
        )
        np.add.at(dense, (r.x[ok], r.a[ok], r.y[ok]), r.rate[ok])
        return dense

    @cached_property
    def exit_rates(self) -> np.ndarray:
        """``q_x(a)``: total jump intensity out of ``x`` under ``a``."""
        return self.rate_matrix.sum(axis=2)

    @cached_property
    def q_bar(self) -> np.ndarray:
        return np.where(self.admissible, self.exit_rates, 0.0).max(axis=1)

    @cached_property
    def cost_array(self) -> np.ndarray:
        """Costs with unspecified in-graph entries read as 0 and +inf off the graph."""
        filled = np.where(np.isnan(self.costs), 0.0, self.costs)
        return np.where(self.admissible[None], filled, np.inf)

    @cached_property
    def usable(self) -> np.ndarray:
        """Admissible pairs whose running cost ``c_0`` is finite."""
        return self.admissible & np.isfinite(self.cost_array[0])

    def generator(self, policy) -> np.ndarray:
        """Full generator ``Q_pi`` (diagonal included) under a stationary policy."""
        probs = policy.to_stationary(self.n_actions).probs
        off = np.einsum("xa,xay->xy", probs, self.rate_matrix)
        np.fill_diagonal(off, 0.0)
        return off - np.diag(off.sum(axis=1))

    def mixed_cost(self, policy, i: int = 0) -> np.ndarray:
        probs = policy.to_stationary(self.n_actions).probs
        c = self.cost_array[i]
        with np.errstate(invalid="ignore"):
            terms = np.where(probs > 0, probs * c, 0.0)
        return terms.sum(axis=1)

    def index_of(self, label) -> int:
        for i, lab in enumerate(self.labels):
            if lab == label or str(lab) == str(label):
                return i
        raise KeyError(label)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_model(m: CtmdpModel) -> ValidationReport:
    """Collect every structural violation; an empty report means valid."""
    out = []
    n, n_act = m.n_states, m.n_actions
    if n == 0:
        out.append("model has no states")
    if len({str(lab) for lab in m.labels}) != n:
        out.append("state labels are not unique")
    if len(m.action_sets) != n:
        out.append(f"{len(m.action_sets)} action sets for {n} states")
    for x, acts in enumerate(m.action_sets):
        if not acts:
            out.append(f"state {m.labels[x]!r}: empty action set")
        if len(set(acts)) != len(acts):
            out.append(f"state {m.labels[x]!r}: duplicate action index")
        if any(a < 0 or a >= n_act for a in acts):
            out.append(f"state {m.labels[x]!r}: action index out of range")

    r = m.rates
    seen = set()
    for x, a, y, rate in zip(r.x, r.a, r.y, r.rate):
        where = f"rate ({x},{a},{y})"
        if not (0 <= x < n and 0 <= y < n):
            out.append(f"{where}: state index out of range")
            continue
        if x == y:
            out.append(f"{where}: diagonal entry supplied")
        if not (0 <= a < n_act) or not m.admissible[x, a]:
            out.append(f"{where}: entry outside graph K")
        if not math.isfinite(rate):
            out.append(f"{where}: rate is not finite")
        elif rate < 0:
            out.append(f"{where}: negative off-diagonal rate")
        if (x, a, y) in seen:
            out.append(f"{where}: duplicate entry")
        seen.add((x, a, y))

    if m.costs.shape[1:] != (n, n_act):
        out.append("cost tables have the wrong shape")
    else:
        outside = ~np.isnan(m.costs) & ~m.admissible[None]
        for i, x, a in zip(*np.nonzero(outside)):
            out.append(f"cost c_{i}({m.labels[x]!r},{a}): entry outside graph K")
        if np.any(np.isneginf(m.costs)):
            out.append("cost value -inf is not allowed")

    if not (math.isfinite(m.alpha) and m.alpha > 0):
        out.append("alpha must be positive and finite")
    if len(m.bounds) != m.n_costs - 1:
        out.append(f"{len(m.bounds)} bounds for {m.n_costs - 1} constraint costs")
    if any(not math.isfinite(b) for b in m.bounds):
        out.append("constraint bounds must be finite")
    if not (0 <= m.initial < max(n, 1)):
        out.append("initial state out of range")
    return ValidationReport(out)


def ensure_valid(m: CtmdpModel) -> CtmdpModel:
    report = validate_model(m)
    if not report.ok:
        raise ValidationError(report.violations)
    return m


def forbidden_pairs(m: CtmdpModel) -> list[tuple[int, int]]:
    """Admissible pairs kept in the model but flagged by ``c_0 = +inf``."""
    mask = m.admissible & ~np.isfinite(m.cost_array[0])
    return [(int(x), int(a)) for x, a in zip(*np.nonzero(mask))]


# ---------------------------------------------------------------------------
# resolvent of the original chain


def resolvent_value(m: CtmdpModel, policy, i: int = 0) -> np.ndarray:
    """Discounted value ``(alpha I - Q_pi)^{-1} c_pi`` for a stationary policy."""
    return resolvent_apply(m, policy, m.mixed_cost(policy, i))


def resolvent_apply(m: CtmdpModel, policy, f) -> np.ndarray:
    Q = m.generator(policy)
    f = np.asarray(f, dtype=float)
    lhs = m.alpha * np.eye(m.n_states) - Q
    if np.all(np.isfinite(f)):
        return np.linalg.solve(lhs, f)
    # an infinite rate on any state reachable from x makes the value at x infinite
    bad = ~np.isfinite(f)
    reach = _reachable_from(Q > 0, bad)
    out = np.full(m.n_states, np.inf)
    ok = ~reach
    if np.any(ok):
        out[ok] = np.linalg.solve(lhs[np.ix_(ok, ok)], f[ok])
    return out


def _reachable_from(adj: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """States from which some ``targets`` state is reachable."""
    hit = targets.copy()
    while True:
        new = hit | (adj[:, hit].any(axis=1))
        if np.array_equal(new, hit):
            return hit
        hit = new


# ---------------------------------------------------------------------------
# parametric families


@dataclass(frozen=True)
class ModelFamily:
    """Truncated birth/death style family on labels ``start..start+M-1``.

    ``rate_parameters`` keys: ``birth_coef``, ``birth_power``,
    ``death_coef``, ``death_power`` (rate ``coef * x**power``), ``start``;
    for ``explicit`` a ``matrix`` of off-diagonal rates.
    """

    kind: str
    rate_parameters: dict
    truncation: int
    boundary: str = "absorbing"

    def birth(self, x: float) -> float:
        p = self.rate_parameters
        return float(p.get("birth_coef", 0.0)) * float(x) ** float(p.get("birth_power", 1.0))

    def death(self, x: float) -> float:
        p = self.rate_parameters
        return float(p.get("death_coef", 0.0)) * float(x) ** float(p.get("death_power", 1.0))

    @property
    def start(self) -> int:
        return int(self.rate_parameters.get("start", 1))

    @property
    def labels(self) -> tuple:
        return tuple(range(self.start, self.start + self.truncation))


_FAMILY_PARAM_KEYS = {"birth_coef", "birth_power", "death_coef", "death_power", "start", "matrix"}


def _check_family(f: ModelFamily) -> None:
    if f.kind not in ("pure_birth", "birth_death", "explicit"):
        raise FamilyError(f"unknown family kind {f.kind!r}")
    if f.boundary not in ("absorbing", "reflecting"):
        raise FamilyError(f"unknown boundary policy {f.boundary!r}")
    if not isinstance(f.truncation, (int, np.integer)) or f.truncation < 2:
        raise FamilyError("truncation level M must be an integer >= 2")
    unknown = set(f.rate_parameters) - _FAMILY_PARAM_KEYS
    if unknown:
        raise FamilyError(f"unknown rate parameters {sorted(unknown)}")
    for key in ("birth_coef", "death_coef"):
        if float(f.rate_parameters.get(key, 0.0)) < 0:
            raise FamilyError(f"{key} must be nonnegative")
    if f.kind == "pure_birth" and float(f.rate_parameters.get("death_coef", 0.0)) != 0.0:
        raise FamilyError("pure_birth family cannot have deaths")
    if f.start < 0 and f.kind != "explicit":
        raise FamilyError("labels must start at a nonnegative integer")


def family_rates(f: ModelFamily) -> np.ndarray:
    """Off-diagonal ``(M, M)`` rates of the truncated (conservative) chain."""
    _check_family(f)
    M = f.truncation
    if f.kind == "explicit":
        mat = np.array(f.rate_parameters.get("matrix"), dtype=float)
        if mat.shape != (M, M):
            raise FamilyError("explicit family needs an M x M matrix")
        if np.any(mat < 0) or not np.all(np.isfinite(mat)):
            raise FamilyError("explicit rates must be finite and nonnegative")
        mat = mat.copy()
        np.fill_diagonal(mat, 0.0)
        return mat
    q = np.zeros((M, M))
    labels = f.labels
    for i, x in enumerate(labels):
        top = i == M - 1
        if top and f.boundary == "absorbing":
            continue
        if not top:
            q[i, i + 1] = f.birth(x)
        if i > 0:
            q[i, i - 1] = f.death(x)
    if not np.all(np.isfinite(q)):
        raise FamilyError("family rates overflow")
    return q


CostSpec = float | Sequence[float] | Callable[[Any], float]


def build_family(
    f: ModelFamily,
    costs: Sequence[CostSpec] | None = None,
    alpha: float = 1.0,
    bounds: Sequence[float] = (),
    initial: int = 0,
) -> CtmdpModel:
    """Instantiate an uncontrolled truncated family (single action 0)."""
    q = family_rates(f)
    M = f.truncation
    labels = f.labels
    if costs is None:
        costs = [0.0]
    tables = []
    for spec in costs:
        if callable(spec):
            col = np.array([spec(x) for x in labels], dtype=float)
        elif np.ndim(spec) == 0:
            col = np.full(M, float(spec))
        else:
            col = np.asarray(spec, dtype=float)
            if col.shape != (M,):
                raise FamilyError("per-state cost tables must have length M")
        tables.append(col[:, None])
    model = CtmdpModel.from_arrays(
        q[:, None, :], np.stack(tables), alpha, bounds=bounds, initial=initial, labels=labels
    )
    return ensure_valid(model)


# ---------------------------------------------------------------------------
# JSON model files


def _parse_cost(v) -> float:
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "+inf", "infinity", "+infinity"):
            return math.inf
        raise SchemaError(f"bad cost value {v!r}")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"bad cost value {v!r}")
    return float(v)


def _num(v, what: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{what} must be a number")
    return float(v)


def family_from_dict(block: dict, truncation: int | None = None) -> ModelFamily:
    unknown = set(block) - {"kind", "rate_parameters", "truncation", "boundary"}
    if unknown:
        raise SchemaError(f"unknown family keys {sorted(unknown)}")
    try:
        return ModelFamily(
            kind=block["kind"],
            rate_parameters=dict(block.get("rate_parameters", {})),
            truncation=int(truncation if truncation is not None else block["truncation"]),
            boundary=block.get("boundary", "absorbing"),
        )
    except KeyError as exc:
        raise SchemaError(f"family block missing {exc}") from None


def model_from_dict(data: dict, truncation: int | None = None) -> CtmdpModel:
    """Parse the model-file schema; raises SchemaError or ValidationError."""
    if not isinstance(data, dict):
        raise SchemaError("model file must hold a JSON object")
    unknown = set(data) - MODEL_KEYS
    if unknown:
        raise SchemaError(f"unknown keys {sorted(unknown)}")
    family = None
    if "family" in data:
        family = family_from_dict(data["family"], truncation)
        if "rates" in data:
            raise SchemaError("give either 'rates' or 'family', not both")
    for key in ("costs", "alpha"):
        if key not in data:
            raise SchemaError(f"missing field {key!r}")
    if family is None:
        for key in ("states", "actions", "rates"):
            if key not in data:
                raise SchemaError(f"missing field {key!r}")

    if family is not None:
        fam_labels = list(family.labels)
        labels = list(data.get("states", fam_labels))
        if [str(s) for s in labels] != [str(s) for s in fam_labels]:
            raise SchemaError("'states' disagrees with the family labels")
        actions = data.get("actions", [[0]] * len(labels))
    else:
        labels = list(data["states"])
        actions = data["actions"]

    if len({str(s) for s in labels}) != len(labels):
        raise SchemaError("duplicate state label")
    index = {str(lab): i for i, lab in enumerate(labels)}

    def idx(label) -> int:
        try:
            return index[str(label)]
        except KeyError:
            raise SchemaError(f"unknown state label {label!r}") from None

    if not isinstance(actions, list) or len(actions) != len(labels):
        raise SchemaError("'actions' must list one action set per state")
    action_sets = []
    for acts in actions:
        if not isinstance(acts, list) or not all(isinstance(a, int) and not isinstance(a, bool) for a in acts):
            raise SchemaError("action sets must be lists of integers")
        action_sets.append(tuple(acts))

    xs, as_, ys, rs = [], [], [], []
    if family is not None:
        dense = family_rates(family)
        for i, j in zip(*np.nonzero(dense)):
            xs.append(i), as_.append(0), ys.append(j), rs.append(dense[i, j])
    else:
        seen = set()
        for entry in data["rates"]:
            if not isinstance(entry, list) or len(entry) != 4:
                raise SchemaError("rate entries are [x, action, y, rate]")
            x, a, y, rate = idx(entry[0]), entry[1], idx(entry[2]), _num(entry[3], "rate")
            if not isinstance(a, int):
                raise SchemaError("action index must be an integer")
            if rate < 0:
                raise SchemaError(f"negative off-diagonal rate at {entry}")
            if (x, a, y) in seen:
                raise SchemaError(f"duplicate rate entry {entry}")
            seen.add((x, a, y))
            xs.append(x), as_.append(a), ys.append(y), rs.append(rate)

    tables = data["costs"]
    if not isinstance(tables, list) or not tables:
        raise SchemaError("'costs' must be a nonempty list of tables")
    n_act = 1 + max(
        [a for acts in action_sets for a in acts]
        + as_
        + [e[1] for t in tables for e in t if isinstance(e, list) and len(e) == 3 and isinstance(e[1], int)]
        + [0]
    )
    costs = np.full((len(tables), len(labels), n_act), np.nan)
    for i, table in enumerate(tables):
        for entry in table:
            if not isinstance(entry, list) or len(entry) != 3 or not isinstance(entry[1], int):
                raise SchemaError("cost entries are [x, action, value]")
            x, a = idx(entry[0]), entry[1]
            if not np.isnan(costs[i, x, a]):
                raise SchemaError(f"duplicate cost entry {entry} in table {i}")
            costs[i, x, a] = _parse_cost(entry[2])

    bounds = [_num(b, "bound") for b in data.get("bounds", [])]
    initial = idx(data["initial"]) if "initial" in data else 0
    model = CtmdpModel(
        labels=tuple(labels),
        action_sets=tuple(action_sets),
        rates=RateKernel(xs, as_, ys, rs),
        costs=costs,
        alpha=_num(data["alpha"], "alpha"),
        bounds=tuple(bounds),
        initial=initial,
    )
    return ensure_valid(model)


def read_json(path) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None


def load_model(path, truncation: int | None = None) -> CtmdpModel:
    return model_from_dict(read_json(path), truncation)


def read_model_file(path, truncation: int | None = None) -> tuple[CtmdpModel, dict | None]:
    """Load a model and return any embedded ``certificate`` block with it."""
    data = read_json(path)
    model = model_from_dict(data, truncation)
    return model, data.get("certificate") if isinstance(data, dict) else None


def _json_cost(v: float):
    return "inf" if math.isinf(v) else float(v)


def model_to_dict(m: CtmdpModel) -> dict:
    labels = list(m.labels)
    r = m.rates
    order = np.lexsort((r.y, r.a, r.x))
    rates = [[labels[r.x[k]], int(r.a[k]), labels[r.y[k]], float(r.rate[k])] for k in order]
    costs = []
    for i in range(m.n_costs):
        table = []
        for x in range(m.n_states):
            for a in m.action_sets[x]:
                v = m.costs[i, x, a]
                if not np.isnan(v):
                    table.append([labels[x], int(a), _json_cost(v)])
        costs.append(table)
    return {
        "states": labels,
        "actions": [list(acts) for acts in m.action_sets],
        "rates": rates,
        "costs": costs,
        "alpha": m.alpha,
        "bounds": list(m.bounds),
        "initial": labels[m.initial],
    }


def save_model(m: CtmdpModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(m), indent=2) + "\n")


__all__ = [
    "CtmdpModel",
    "DeterministicPolicy",
    "ModelFamily",
    "RateKernel",
    "StationaryPolicy",
    "ValidationReport",
    "build_family",
    "ensure_valid",
    "family_rates",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "resolvent_apply",
    "resolvent_value",
    "validate_model",
]
