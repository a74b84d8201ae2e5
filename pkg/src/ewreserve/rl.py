"""Discrete fuzzy actor-critic baseline framed as an n-armed bandit.

A zero-order Takagi-Sugeno system maps the windowed mean request of every node to a
scalar level. Each rule's consequent is a discrete level picked greedily from a
critic table; exploratory back-processing perturbs consequents and pulls the fired
rules' critic entries toward the observed reward.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .network import ActionSpace, NetworkConfig, reservation_cost
from .transfer import get_table, solve_transfer

log = logging.getLogger(__name__)

N_MEMBERSHIP = 11


class FuzzyInferenceSystem:
    """Triangular partitions with evenly spaced peaks over ``[0, upper_n]`` per input."""

    def __init__(self, upper, n_mfs: int = N_MEMBERSHIP):
        self.upper = np.asarray(upper, dtype=np.float64)
        if np.any(self.upper <= 0):
            raise ValueError("input ranges must be positive")
        if n_mfs < 2:
            raise ValueError("need at least two membership functions per input")
        self.n_mfs = n_mfs
        self.n_inputs = len(self.upper)
        self.n_rules = n_mfs**self.n_inputs
        self.peaks = [np.linspace(0.0, u, n_mfs) for u in self.upper]

    def memberships(self, x: float, dim: int) -> list[tuple[int, float]]:
        step = self.upper[dim] / (self.n_mfs - 1)
        pos = min(max(x, 0.0), self.upper[dim]) / step
        j = min(int(math.floor(pos)), self.n_mfs - 2)
        frac = pos - j
        out = []
        if frac < 1.0:
            out.append((j, 1.0 - frac))
        if frac > 0.0:
            out.append((j + 1, frac))
        return out

    def fire(self, inputs) -> tuple[np.ndarray, np.ndarray]:
        """Indices of rules with nonzero firing and their normalized strengths."""
        rules = [(0, 1.0)]
        for dim, x in enumerate(inputs):
            mfs = self.memberships(float(x), dim)
            # products of tiny memberships can underflow to zero; such rules do not fire
            rules = [(r * self.n_mfs + j, w * mu) for r, w in rules for j, mu in mfs if w * mu > 0.0]
        idx = np.array([r for r, _ in rules], dtype=np.int64)
        w = np.array([w for _, w in rules])
        total = w.sum()
        assert total > 0, "triangular partition left the input uncovered"
        return idx, w / total


def fis_inputs(buffer, t: int | None = None, history: int = 100) -> np.ndarray:
    """Per-node mean of the last ``min(t, history)`` requests in ``buffer`` (oldest first)."""
    rows = list(buffer)
    if not rows:
        raise ValueError("empty request buffer")
    if t is not None:
        rows = rows[:t]
    window = np.asarray(rows[-history:], dtype=np.float64)
    return window.mean(axis=0)


def flc_evaluate(fis: FuzzyInferenceSystem, actor, inputs, round_output: bool = True) -> float:
    fired, phi = fis.fire(inputs)
    actor = np.asarray(actor)
    scalar = 0.0
    for f in range(len(fired)):
        scalar += phi[f] * actor[fired[f]]
    return float(math.floor(scalar + 0.5)) if round_output else float(scalar)


def map_scalar_to_index(scalar: float, n_levels: int, n_actions: int) -> tuple[int, bool]:
    """Quantize a level onto the lexicographic action index; flags clamping."""
    level = int(math.floor(scalar + 0.5))
    clamped = not 0 <= level < n_levels
    return kernels.backend.level_to_action(level, n_levels, n_actions), clamped


def map_scalar_to_reservation(scalar: float, space: ActionSpace, n_levels: int | None = None) -> tuple[int, ...]:
    n_levels = len(space) if n_levels is None else n_levels
    idx, clamped = map_scalar_to_index(scalar, n_levels, len(space))
    if clamped:
        log.warning("FIS output %s outside [0, %d], clamped", scalar, n_levels - 1)
    return space[idx]


def rl_reward(config: NetworkConfig, a_prev, a_curr, b_prev, lam: float) -> float:
    return -reservation_cost(config, a_prev) - lam * solve_transfer(config, a_curr, b_prev).blocking_cost


def reward_row(space: ActionSpace, prev_index: int, c0_row: np.ndarray, lam: float,
               budget: float, hard_penalty: bool = False) -> np.ndarray:
    """Reward of every candidate action against the last request.

    The default is ``-C(previous) - lam * C_0(candidate)``. ``hard_penalty`` swaps in
    ``-C(candidate)`` within budget and ``-100`` otherwise.
    """
    if hard_penalty:
        return np.where(c0_row < budget, -space.reservation_costs, -100.0)
    return -space.reservation_costs[prev_index] - lam * c0_row


@dataclass
class RlParams:
    alpha: float = 0.995
    epsilon: float = 0.5
    history: int = 100
    back_iters: int = 50
    lam: float = 32.0
    n_levels: int | None = None
    hard_penalty: bool = False


@dataclass
class ActorCriticState:
    params: RlParams
    fis: FuzzyInferenceSystem = field(repr=False)
    critic: np.ndarray = field(repr=False)
    n_levels: int
    buffer: deque = field(repr=False)
    last_action: int | None = None
    clamped: int = 0

    def actor(self, rules=None) -> np.ndarray:
        rows = self.critic if rules is None else self.critic[rules]
        return rows.argmax(axis=1)


def init_rl(config: NetworkConfig, space: ActionSpace, params: RlParams, rng: np.random.Generator) -> ActorCriticState:
    fis = FuzzyInferenceSystem(config.capacities)
    n_levels = len(space) if params.n_levels is None else params.n_levels
    critic = rng.standard_normal((fis.n_rules, n_levels))
    return ActorCriticState(params, fis, critic, n_levels, deque(maxlen=params.history))


def rl_step(state: ActorCriticState, config: NetworkConfig, space: ActionSpace, b_prev,
            rng: np.random.Generator, table=None) -> tuple[tuple[int, ...], ActorCriticState]:
    """One slot: absorb ``b_prev``, back-process, then emit the greedy reservation.

    ``b_prev`` is None on the first slot, when there is nothing to learn from yet.
    """
    p = state.params
    if b_prev is not None:
        state.buffer.append(config.check_request(b_prev))
    inputs = fis_inputs(state.buffer, history=p.history) if state.buffer else np.zeros(config.n_servers)
    fired, phi = state.fis.fire(inputs)
    if b_prev is not None and state.last_action is not None and p.back_iters > 0:
        table = table if table is not None else get_table(config)
        c0_row = table.blocking_row(b_prev, space.actions)
        rewards = reward_row(space, state.last_action, c0_row, p.lam, config.budget, p.hard_penalty)
        explore = rng.random((p.back_iters, len(fired)))
        levels = rng.integers(0, state.n_levels, size=(p.back_iters, len(fired)))
        kernels.backend.back_process(state.critic, fired, phi, explore, levels,
                                     p.epsilon, p.alpha, rewards, state.n_levels)
    omega = state.actor(fired)
    scalar = 0.0
    for f in range(len(fired)):
        scalar += phi[f] * omega[f]
    idx, clamped = map_scalar_to_index(scalar, state.n_levels, len(space))
    state.clamped += clamped
    state.last_action = idx
    return space[idx], state
