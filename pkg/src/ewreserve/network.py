"""Problem instance: servers, the discrete reservation space, and quadratic costs."""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

ACTION_CAP = 10**6
THETA_EXHAUSTIVE_CAP = 10**7
THETA_FLOOR = 1e-12


class ConfigError(ValueError):
    pass


class SpaceTooLarge(ConfigError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    """A network of ``n_servers`` with per-server capacity and cost coefficients.

    Every cost is quadratic: reserving ``x`` at server n costs
    ``reserve_coeff[n] * x**2``, ``x`` unserved jobs at n cost
    ``violation_coeff[n] * x**2`` and moving ``x`` jobs from n to m costs
    ``transfer_coeff[n][m] * x**2``.
    """

    capacities: tuple[int, ...]
    reserve_coeff: tuple[float, ...]
    violation_coeff: tuple[float, ...]
    transfer_coeff: tuple[tuple[float, ...], ...]
    budget: float = 0.1
    reservation_floor: int = 1

    def __post_init__(self):
        object.__setattr__(self, "capacities", tuple(int(c) for c in self.capacities))
        object.__setattr__(self, "reserve_coeff", tuple(float(c) for c in self.reserve_coeff))
        object.__setattr__(self, "violation_coeff", tuple(float(c) for c in self.violation_coeff))
        object.__setattr__(
            self, "transfer_coeff", tuple(tuple(float(x) for x in row) for row in self.transfer_coeff)
        )
        n = len(self.capacities)
        if n < 1:
            raise ConfigError("need at least one server")
        if self.reservation_floor < 0:
            raise ConfigError("reservation_floor must be nonnegative")
        if any(c < self.reservation_floor for c in self.capacities):
            raise ConfigError("every capacity must be >= reservation_floor")
        if len(self.reserve_coeff) != n or len(self.violation_coeff) != n:
            raise ConfigError("per-server coefficient vectors must have length n_servers")
        if len(self.transfer_coeff) != n or any(len(row) != n for row in self.transfer_coeff):
            raise ConfigError("transfer_coeff must be n_servers x n_servers")
        coeffs = [*self.reserve_coeff, *self.violation_coeff, *itertools.chain(*self.transfer_coeff)]
        if any(c < 0 or not math.isfinite(c) for c in coeffs):
            raise ConfigError("cost coefficients must be finite and nonnegative")
        if any(self.transfer_coeff[i][i] != 0 for i in range(n)):
            raise ConfigError("transfer_coeff must have a zero diagonal")
        if not (self.budget >= 0 and math.isfinite(self.budget)):
            raise ConfigError("budget must be finite and nonnegative")

    @property
    def n_servers(self) -> int:
        return len(self.capacities)

    @property
    def capacity_array(self) -> np.ndarray:
        return np.asarray(self.capacities, dtype=np.int64)

    @property
    def reserve_array(self) -> np.ndarray:
        return np.asarray(self.reserve_coeff, dtype=np.float64)

    @property
    def violation_array(self) -> np.ndarray:
        return np.asarray(self.violation_coeff, dtype=np.float64)

    @property
    def transfer_matrix(self) -> np.ndarray:
        return np.asarray(self.transfer_coeff, dtype=np.float64)

    def check_reservation(self, a: Sequence[int]) -> np.ndarray:
        a = np.asarray(a, dtype=np.int64)
        if a.shape != (self.n_servers,):
            raise ConfigError(f"reservation must have length {self.n_servers}")
        if np.any(a < self.reservation_floor) or np.any(a > self.capacity_array):
            raise ConfigError(f"reservation {a.tolist()} out of bounds")
        return a

    def check_request(self, b: Sequence[int]) -> np.ndarray:
        b = np.asarray(b, dtype=np.int64)
        if b.shape != (self.n_servers,):
            raise ConfigError(f"request must have length {self.n_servers}")
        if np.any(b < 0) or np.any(b > self.capacity_array):
            raise ConfigError(f"request {b.tolist()} out of bounds")
        return b

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n_servers": self.n_servers,
            "capacities": list(self.capacities),
            "reservation_floor": self.reservation_floor,
            "reserve_coeff": list(self.reserve_coeff),
            "violation_coeff": list(self.violation_coeff),
            # row-major: entry n*N + m is the cost coefficient of moving jobs n -> m
            "transfer_coeff": [x for row in self.transfer_coeff for x in row],
            "budget": self.budget,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        try:
            caps = d["capacities"]
            n = int(d.get("n_servers", len(caps)))
            if n != len(caps):
                raise ConfigError("n_servers does not match len(capacities)")
            k = d["transfer_coeff"]
            if k and not isinstance(k[0], (list, tuple)):
                if len(k) != n * n:
                    raise ConfigError("flat transfer_coeff must have n_servers**2 entries")
                k = [k[i * n:(i + 1) * n] for i in range(n)]
            return cls(
                capacities=caps,
                reserve_coeff=_broadcast(d["reserve_coeff"], n),
                violation_coeff=_broadcast(d["violation_coeff"], n),
                transfer_coeff=k,
                budget=float(d.get("budget", 0.1)),
                reservation_floor=int(d.get("reservation_floor", 1)),
            )
        except KeyError as e:
            raise ConfigError(f"missing config key {e}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "NetworkConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _broadcast(v, n):
    if isinstance(v, (int, float)):
        return [float(v)] * n
    return v


DEFAULT_TRANSFER = (
    (0.0, 0.02, 0.03),
    (0.02, 0.0, 0.02),
    (0.03, 0.02, 0.0),
)


def default_network(budget: float = 0.1) -> NetworkConfig:
    """Three fully connected nodes of capacity 10 with 0.05 x^2 reservation and violation costs."""
    return NetworkConfig(
        capacities=(10, 10, 10),
        reserve_coeff=(0.05, 0.05, 0.05),
        violation_coeff=(0.05, 0.05, 0.05),
        transfer_coeff=DEFAULT_TRANSFER,
        budget=budget,
    )


def reservation_cost(config: NetworkConfig, a) -> float:
    a = config.check_reservation(a)
    return float(np.dot(config.reserve_array, a.astype(np.float64) ** 2))


@dataclass(frozen=True)
class ActionSpace:
    """All reservations in lexicographic order, with their reservation costs."""

    config: NetworkConfig
    actions: np.ndarray = field(repr=False)
    reservation_costs: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def radices(self) -> np.ndarray:
        return self.config.capacity_array - self.config.reservation_floor + 1

    def index_of(self, a) -> int:
        a = self.config.check_reservation(a)
        idx = 0
        for digit, radix in zip(a - self.config.reservation_floor, self.radices):
            idx = idx * int(radix) + int(digit)
        return idx

    def __getitem__(self, i) -> tuple[int, ...]:
        return tuple(int(x) for x in self.actions[i])


def enumerate_actions(config: NetworkConfig, cap: int = ACTION_CAP) -> ActionSpace:
    lo = config.reservation_floor
    size = math.prod(m - lo + 1 for m in config.capacities)
    if size > cap:
        raise SpaceTooLarge(f"{size} reservations exceed the cap of {cap}")
    ranges = [range(lo, m + 1) for m in config.capacities]
    actions = np.array(list(itertools.product(*ranges)), dtype=np.int64).reshape(size, config.n_servers)
    actions.setflags(write=False)
    costs = (actions.astype(np.float64) ** 2) @ config.reserve_array
    costs.setflags(write=False)
    return ActionSpace(config, actions, costs)


@dataclass(frozen=True)
class CostBound:
    value: float
    exhaustive: bool


def cost_bound_theta(config: NetworkConfig, space: ActionSpace, mode: str = "auto",
                     cap: int = THETA_EXHAUSTIVE_CAP) -> CostBound:
    """Bound on |C|, |C_T| and |C_V| over every reservation and request.

    ``mode="exhaustive"`` is exact. ``mode="corner"`` only evaluates requests at
    all-zero, all-floor and all-capacity and is flagged non-exhaustive. ``auto``
    picks exhaustive when the difference table fits under ``cap``.
    """
    from .transfer import TransferTable, solve_transfer

    if mode not in ("auto", "exhaustive", "corner"):
        raise ValueError(f"unknown mode {mode!r}")
    c_max = float(space.reservation_costs.max())
    n_diffs = TransferTable.size_for(config)
    if mode == "auto":
        mode = "exhaustive" if n_diffs <= cap else "corner"
        if mode == "corner":
            log.warning("cost bound: %d differences exceed cap, using corner heuristic", n_diffs)
    if mode == "exhaustive":
        table = TransferTable.build(config)
        theta = max(c_max, float(table.transfer.max()), float(table.violation.max()))
    else:
        caps = config.capacity_array
        corners = {tuple(caps), tuple([0] * config.n_servers),
                   tuple([min(config.reservation_floor, int(c)) for c in caps])}
        theta = c_max
        for b in corners:
            for a in space.actions:
                plan = solve_transfer(config, a, b)
                theta = max(theta, plan.transfer_cost, plan.violation_cost)
    if theta <= 0:
        log.warning("all costs are zero; using the positive floor %g as cost bound", THETA_FLOOR)
        theta = THETA_FLOOR
    return CostBound(theta, mode == "exhaustive")
