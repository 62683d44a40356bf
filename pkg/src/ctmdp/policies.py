"""Stationary policies over a finite state set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class DeterministicPolicy:
    """One action index per original state.

    The sinks of the reduced model (delta and x_inf) always use the
    single dummy action 0 and are not stored here.
    """

    choice: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "choice", np.asarray(self.choice, dtype=int))

    def __len__(self):
        return len(self.choice)

    def to_stationary(self, n_actions: int) -> "StationaryPolicy":
        probs = np.zeros((len(self.choice), n_actions))
        probs[np.arange(len(self.choice)), self.choice] = 1.0
        return StationaryPolicy(probs)

    def as_list(self) -> list[int]:
        return [int(a) for a in self.choice]


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    """Row ``x`` holds the action distribution used in state ``x``."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 2:
            raise ValueError("policy weights must be a 2-d array (state, action)")
        if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("policy rows must be probability vectors")
        object.__setattr__(self, "probs", probs)

    def __len__(self):
        return self.probs.shape[0]

    def to_stationary(self, n_actions: int) -> "StationaryPolicy":
        if self.probs.shape[1] == n_actions:
            return self
        if self.probs.shape[1] > n_actions:
            raise ValueError("policy refers to more actions than the model has")
        padded = np.zeros((self.probs.shape[0], n_actions))
        padded[:, : self.probs.shape[1]] = self.probs
        return StationaryPolicy(padded)

    def is_deterministic(self) -> bool:
        return bool(np.all(np.isclose(self.probs.max(axis=1), 1.0, atol=1e-12)))


def as_stationary(policy, n_actions: int) -> StationaryPolicy:
    return policy.to_stationary(n_actions)


def policy_from_json(obj, labels, n_actions: int):
    """Parse ``{"label": action}`` or ``{"label": {"action": weight}}``.

    A bare list is read in state order.
    """
    index = {str(lab): i for i, lab in enumerate(labels)}
    if isinstance(obj, dict) and "policy" in obj:
        obj = obj["policy"]
    if isinstance(obj, list):
        items = list(zip(labels, obj))
    else:
        items = [(k, v) for k, v in obj.items()]
    if len(items) != len(labels):
        raise ValueError("policy must assign every state")
    deterministic = all(isinstance(v, int) for _, v in items)
    if deterministic:
        choice = np.zeros(len(labels), dtype=int)
        for lab, a in items:
            choice[index[str(lab)]] = a
        return DeterministicPolicy(choice)
    probs = np.zeros((len(labels), n_actions))
    for lab, v in items:
        row = index[str(lab)]
        if isinstance(v, int):
            probs[row, v] = 1.0
        elif isinstance(v, dict):
            for a, p in v.items():
                probs[row, int(a)] = float(p)
        else:
            probs[row, : len(v)] = v
    return StationaryPolicy(probs)


def policy_to_json(policy, labels) -> dict:
    if isinstance(policy, DeterministicPolicy):
        return {str(lab): int(a) for lab, a in zip(labels, policy.choice)}
    out = {}
    for lab, row in zip(labels, policy.probs):
        out[str(lab)] = {str(a): float(p) for a, p in enumerate(row) if p > 0}
    return out
