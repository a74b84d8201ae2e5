"""Hindsight benchmark, regret series and the closed-form performance bounds."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .network import ActionSpace, NetworkConfig
from .transfer import get_table

log = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class HindsightSolution:
    action_index: int
    reservation_cost: float
    horizon: int
    feasible: bool
    per_prefix_slack: np.ndarray = field(repr=False)

    @property
    def total_cost(self) -> float:
        return self.reservation_cost * self.horizon


def blocking_matrix(config: NetworkConfig, space: ActionSpace, requests, table=None) -> np.ndarray:
    """C_0 of every action against every request, shape (T, |A|)."""
    table = table if table is not None else get_table(config)
    req_idx = (np.asarray(requests, dtype=np.int64) - table.lo) @ table.strides
    idx = req_idx[:, None] - (space.actions @ table.strides)[None, :]
    return table.transfer[idx] + table.violation[idx]


def hindsight_optimum(config: NetworkConfig, space: ActionSpace, requests, table=None) -> HindsightSolution:
    """Cheapest fixed reservation whose running-average blocking cost stays within budget.

    Feasibility requires ``sum_{s<=t} C_0(a, B^s) <= v * t`` for every prefix t. Ties go to the
    lexicographically smallest action. If nothing is feasible the action with the smallest
    worst-prefix excess is returned with ``feasible=False``.
    """
    requests = np.asarray(requests, dtype=np.int64)
    if len(requests) == 0:
        raise ValueError("empty trace")
    table = table if table is not None else get_table(config)
    n = len(space)
    cum = np.zeros(n)
    worst = np.full(n, -np.inf)
    v = config.budget
    for t, b in enumerate(requests, start=1):
        cum += table.blocking_row(b, space.actions)
        np.maximum(worst, cum - v * t, out=worst)
    ok = worst <= FEASIBILITY_TOL * max(1.0, v * len(requests))
    if ok.any():
        costs = np.where(ok, space.reservation_costs, np.inf)
        best = int(np.argmin(costs))
    else:
        best = int(np.argmin(worst))
        log.warning("no fixed reservation satisfies every prefix constraint; best worst-excess %.4g", worst[best])
    idx = (requests - table.lo) @ table.strides - int(space.actions[best] @ table.strides)
    c0 = table.transfer[idx] + table.violation[idx]
    slack = v * np.arange(1, len(requests) + 1) - np.cumsum(c0)
    return HindsightSolution(best, float(space.reservation_costs[best]), len(requests), bool(ok.any()), slack)


def regret_series(costs_alg, hindsight: HindsightSolution) -> np.ndarray:
    costs_alg = np.asarray(costs_alg, dtype=np.float64)
    if len(costs_alg) != hindsight.horizon:
        raise ValueError("cost series length does not match the hindsight horizon")
    if not hindsight.feasible:
        log.warning("regret measured against an infeasible benchmark")
    return np.cumsum(costs_alg - hindsight.reservation_cost)


def _kappa(theta, eta, lam):
    return eta / 8.0 * (1.0 + 2.0 * lam) ** 2 * theta**2


def regret_bound_rhs(theta: float, eta: float, lam: float, n_actions: int, delta: float, horizon: int) -> float:
    """``kappa*T + log|A|/eta + theta*sqrt(log(1/delta)*T/2)`` with ``kappa = eta/8 (1+2 lam)^2 theta^2``."""
    if not (theta > 0 and eta > 0 and lam >= 0 and n_actions >= 1 and horizon >= 1):
        raise ValueError("bound parameters out of domain")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return (_kappa(theta, eta, lam) * horizon + math.log(n_actions) / eta
            + theta * math.sqrt(0.5 * math.log(1.0 / delta) * horizon))


def constraint_bound_rhs(theta: float, eta: float, lam: float, n_actions: int, horizon: int,
                         min_feasible_cost: float) -> float:
    """Bound on the time-averaged expected penalty: ``(min C + log|A|/(T eta) + kappa) / lam``."""
    if lam <= 0:
        raise ValueError("constraint bound needs lam > 0")
    if not (theta > 0 and eta > 0 and n_actions >= 1 and horizon >= 1):
        raise ValueError("bound parameters out of domain")
    return (min_feasible_cost / lam + math.log(n_actions) / (horizon * lam * eta)
            + _kappa(theta, eta, lam) / lam)


def distribution_distance(p_prev, p_curr) -> float:
    p_prev = np.asarray(p_prev, dtype=np.float64)
    p_curr = np.asarray(p_curr, dtype=np.float64)
    if p_prev.shape != p_curr.shape:
        raise ValueError("length mismatch")
    return float(np.linalg.norm(p_curr - p_prev))
