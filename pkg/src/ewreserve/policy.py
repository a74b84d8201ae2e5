"""Exponentially weighted reservation policy with a long-term constraint penalty.

Each action ``a`` carries two running sums:

* ``cum_constraint[a] = sum_r (C_0(a, B^r) - v)`` over observed requests, whose positive
  running average is the penalty ``digamma(t, a)``;
* ``cum_penalty[a] = sum_s (C(a) + lam * digamma(s, a))``.

The distribution over actions is ``softmax(-eta * cum_penalty)``, computed in the log
domain so long horizons do not underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import ActionSpace, NetworkConfig
from .transfer import get_table

STATE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EwParams:
    eta: float
    lam: float = 32.0

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.lam >= 0:
            raise ValueError("lam must be nonnegative")

    @classmethod
    def for_horizon(cls, horizon: int, lam: float = 32.0) -> "EwParams":
        return cls(1.0 / math.sqrt(horizon), lam)


@dataclass(frozen=True)
class PolicyState:
    params: EwParams
    t: int
    cum_penalty: np.ndarray = field(repr=False)
    cum_constraint: np.ndarray = field(repr=False)
    distribution: np.ndarray = field(repr=False)

    def digammas(self) -> np.ndarray:
        if self.t < 1:
            raise ValueError("no observations yet")
        return np.maximum(self.cum_constraint / self.t, 0.0)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            np.savez(fh, version=STATE_FORMAT_VERSION, t=self.t, eta=self.params.eta,
                     lam=self.params.lam, cum_penalty=self.cum_penalty,
                     cum_constraint=self.cum_constraint, distribution=self.distribution)

    @classmethod
    def load(cls, path) -> "PolicyState":
        with np.load(Path(path)) as z:
            if int(z["version"]) != STATE_FORMAT_VERSION:
                raise ValueError(f"unsupported policy state version {int(z['version'])}")
            return cls(EwParams(float(z["eta"]), float(z["lam"])), int(z["t"]),
                       z["cum_penalty"].copy(), z["cum_constraint"].copy(), z["distribution"].copy())


def softmin(losses: np.ndarray, eta: float) -> np.ndarray:
    logits = -eta * losses
    logits = logits - logits.max()
    w = np.exp(logits)
    return w / w.sum()


def init_policy(space: ActionSpace, params: EwParams) -> PolicyState:
    n = len(space)
    if n == 0:
        raise ValueError("empty action space")
    return PolicyState(params, 0, np.zeros(n), np.zeros(n), np.full(n, 1.0 / n))


def digamma(state: PolicyState, action_index: int) -> float:
    if state.t < 1:
        raise ValueError("digamma needs at least one observation")
    return max(0.0, float(state.cum_constraint[action_index]) / state.t)


def observe_row(state: PolicyState, reservation_costs: np.ndarray, c0_row: np.ndarray,
                budget: float) -> PolicyState:
    """Advance one slot given the blocking cost every action would have paid."""
    if len(c0_row) != len(state.cum_penalty):
        raise ValueError("blocking cost row does not match the action space")
    t = state.t + 1
    cum_constraint = state.cum_constraint + (c0_row - budget)
    penalty = np.maximum(cum_constraint / t, 0.0)
    cum_penalty = state.cum_penalty + (reservation_costs + state.params.lam * penalty)
    return PolicyState(state.params, t, cum_penalty, cum_constraint,
                       softmin(cum_penalty, state.params.eta))


def observe(state: PolicyState, config: NetworkConfig, space: ActionSpace, b, table=None) -> PolicyState:
    b = config.check_request(b)
    table = table if table is not None else get_table(config)
    return observe_row(state, space.reservation_costs, table.blocking_row(b, space.actions), config.budget)


def sample_action(state: PolicyState, rng: np.random.Generator) -> int:
    cdf = np.cumsum(state.distribution)
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(i, len(cdf) - 1)


def expected_costs(distribution: np.ndarray, reservation_costs: np.ndarray, c0_row: np.ndarray,
                   digamma_row: np.ndarray) -> tuple[float, float, float]:
    """Expected reservation cost, blocking cost and penalty under ``distribution``."""
    n = len(distribution)
    if not (len(reservation_costs) == len(c0_row) == len(digamma_row) == n):
        raise ValueError("length mismatch")
    return (float(distribution @ reservation_costs), float(distribution @ c0_row),
            float(distribution @ digamma_row))
