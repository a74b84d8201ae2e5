"""Per-slot job transfer: move excess jobs from deficit to surplus servers at minimum cost.

For a reservation ``a`` and request ``b`` the deficit at n is ``(b_n - a_n)+`` and the
surplus is ``(a_n - b_n)+``. The optimal plan minimizes quadratic transfer cost plus
quadratic cost of the jobs still unserved. Since both pieces only depend on ``b - a``,
a :class:`TransferTable` solves each difference vector once and serves whole rows of
blocking costs by fancy indexing.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .network import NetworkConfig, SpaceTooLarge

ORACLE_DEFICIT_CAP = 12
TABLE_CAP = 10**7


@dataclass(frozen=True)
class TransferPlan:
    delta: np.ndarray = field(repr=False)
    transfer_cost: float
    violation_cost: float

    @property
    def blocking_cost(self) -> float:
        return self.transfer_cost + self.violation_cost


def _deficit_surplus(config: NetworkConfig, a, b):
    a = config.check_reservation(a)
    b = config.check_request(b)
    diff = b - a
    return np.maximum(diff, 0), np.maximum(-diff, 0)


def plan_costs(config: NetworkConfig, a, b, delta) -> tuple[float, float]:
    """(C_T, C_V) of an arbitrary transfer matrix, violation clamped at zero."""
    deficit, _ = _deficit_surplus(config, a, b)
    delta = np.asarray(delta, dtype=np.int64)
    k = config.transfer_coeff
    v = config.violation_coeff
    n = config.n_servers
    ct = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                ct += k[i][j] * float(delta[i, j] * delta[i, j])
    cv = 0.0
    for i in range(n):
        left = int(deficit[i]) - int(delta[i].sum())
        if left > 0:
            cv += v[i] * float(left * left)
    return ct, cv


def _dec(x: float) -> Fraction:
    return Fraction(repr(x))


def exact_objective(config: NetworkConfig, a, b, delta) -> Fraction:
    """Objective of ``delta`` in exact rational arithmetic.

    Coefficients are read as the decimals they print as (0.05 is 1/20), so plans
    that tie in exact arithmetic also tie here.
    """
    deficit, _ = _deficit_surplus(config, a, b)
    delta = np.asarray(delta, dtype=np.int64)
    n = config.n_servers
    total = Fraction(0)
    for i in range(n):
        for j in range(n):
            if i != j and delta[i, j]:
                total += _dec(config.transfer_coeff[i][j]) * int(delta[i, j]) ** 2
        left = int(deficit[i]) - int(delta[i].sum())
        if left > 0:
            total += _dec(config.violation_coeff[i]) * left * left
    return total


def solve_transfer(config: NetworkConfig, a, b, aggregate_caps: bool = True) -> TransferPlan:
    """Exact integer optimum of the transfer problem for one (reservation, request) pair.

    With ``aggregate_caps`` (default) a sender ships at most its deficit in total and a
    receiver absorbs at most its surplus in total; without it only the per-edge cap
    ``min(deficit_n, surplus_m)`` applies.
    """
    a = config.check_reservation(a)
    b = config.check_request(b)
    delta, ct, cv = kernels.backend.solve_batch(
        (b - a)[None, :], config.violation_array, config.transfer_matrix, aggregate_caps
    )
    return TransferPlan(delta[0], float(ct[0]), float(cv[0]))


def brute_force_transfer_oracle(config: NetworkConfig, a, b, aggregate_caps: bool = True,
                                cap: int = ORACLE_DEFICIT_CAP) -> TransferPlan:
    """Enumerate every feasible integer transfer matrix; for tests only."""
    deficit, surplus = _deficit_surplus(config, a, b)
    if int(deficit.sum()) > cap:
        raise ValueError(f"total deficit {int(deficit.sum())} exceeds oracle cap {cap}")
    n = config.n_servers
    edges = [(i, j) for i in range(n) for j in range(n)
             if i != j and deficit[i] > 0 and surplus[j] > 0]
    ranges = [range(min(deficit[i], surplus[j]) + 1) for i, j in edges]
    best = None
    best_val = None
    for combo in itertools.product(*ranges):
        delta = np.zeros((n, n), dtype=np.int64)
        for (i, j), x in zip(edges, combo):
            delta[i, j] = x
        if aggregate_caps and (np.any(delta.sum(axis=1) > deficit) or np.any(delta.sum(axis=0) > surplus)):
            continue
        val = exact_objective(config, a, b, delta)
        if best_val is None or val < best_val:
            best, best_val = delta, val
    ct, cv = plan_costs(config, a, b, best)
    return TransferPlan(best, ct, cv)


@dataclass(frozen=True)
class TransferTable:
    """Transfer and violation cost for every request-minus-reservation difference."""

    config: NetworkConfig
    aggregate_caps: bool
    lo: np.ndarray = field(repr=False)
    strides: np.ndarray = field(repr=False)
    transfer: np.ndarray = field(repr=False)
    violation: np.ndarray = field(repr=False)

    @staticmethod
    def diff_bounds(config: NetworkConfig):
        caps = config.capacity_array
        return -caps, caps - config.reservation_floor

    @classmethod
    def size_for(cls, config: NetworkConfig) -> int:
        lo, hi = cls.diff_bounds(config)
        return math.prod(int(x) for x in hi - lo + 1)

    @classmethod
    def build(cls, config: NetworkConfig, aggregate_caps: bool = True, cap: int = TABLE_CAP) -> "TransferTable":
        lo, hi = cls.diff_bounds(config)
        size = cls.size_for(config)
        if size > cap:
            raise SpaceTooLarge(f"difference table of {size} entries exceeds cap {cap}")
        radices = hi - lo + 1
        strides = np.ones(config.n_servers, dtype=np.int64)
        for i in range(config.n_servers - 2, -1, -1):
            strides[i] = strides[i + 1] * radices[i + 1]
        diffs = np.array(list(itertools.product(*(range(l, h + 1) for l, h in zip(lo, hi)))),
                         dtype=np.int64).reshape(size, config.n_servers)
        _, ct, cv = kernels.backend.solve_batch(
            diffs, config.violation_array, config.transfer_matrix, aggregate_caps
        )
        for arr in (ct, cv):
            arr.setflags(write=False)
        return cls(config, aggregate_caps, lo, strides, ct, cv)

    def indices(self, b, actions: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=np.int64)
        return (b - self.lo) @ self.strides - actions @ self.strides

    def blocking_row(self, b, actions: np.ndarray) -> np.ndarray:
        idx = self.indices(b, actions)
        return self.transfer[idx] + self.violation[idx]

    def lookup(self, a, b) -> tuple[float, float]:
        """(C_T, C_V) for a single pair."""
        i = int(self.indices(b, np.asarray(a, dtype=np.int64)[None, :])[0])
        return float(self.transfer[i]), float(self.violation[i])

    def blocking(self, a, b) -> float:
        ct, cv = self.lookup(a, b)
        return ct + cv


@functools.lru_cache(maxsize=8)
def get_table(config: NetworkConfig, aggregate_caps: bool = True) -> TransferTable:
    return TransferTable.build(config, aggregate_caps)
