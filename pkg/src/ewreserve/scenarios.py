"""Request traces: piecewise-constant levels and Poisson requests in random regimes."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import NetworkConfig

DEFAULT_LEVELS = ((3, 5, 2), (6, 2, 4), (4, 4, 4))
DEFAULT_CHANGE_POINTS = (500, 1000)
DEFAULT_HORIZON = 5000


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class RegimeSchedule:
    """``change_points[i]`` is the last slot of regime i; ``params[i]`` is a per-node level or mean."""

    change_points: tuple[int, ...]
    params: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.change_points, self.change_points[1:])):
            raise TraceError("change points must be strictly increasing")
        if len(self.params) != len(self.change_points) + 1:
            raise TraceError("need one parameter vector per regime")

    def regime_of(self, horizon: int) -> np.ndarray:
        """Regime index of slots 1..horizon."""
        t = np.arange(1, horizon + 1)
        return np.searchsorted(np.asarray(self.change_points, dtype=np.int64), t, side="left")


@dataclass(frozen=True)
class RequestTrace:
    requests: np.ndarray = field(repr=False)
    provenance: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.requests)

    @property
    def schedule(self) -> RegimeSchedule | None:
        p = self.provenance
        if "change_points" not in p:
            return None
        return RegimeSchedule(tuple(p["change_points"]), tuple(tuple(x) for x in p["regime_params"]))

    def __eq__(self, other):
        if not isinstance(other, RequestTrace):
            return NotImplemented
        return self.provenance == other.provenance and np.array_equal(self.requests, other.requests)

    def validate(self, config: NetworkConfig) -> None:
        if self.requests.ndim != 2 or self.requests.shape[1] != config.n_servers:
            raise TraceError(f"trace has {self.requests.shape[-1]} columns, config has {config.n_servers} servers")
        if np.any(self.requests < 0) or np.any(self.requests > config.capacity_array):
            raise TraceError("trace request outside [0, capacity]")


def gen_piecewise_fixed(config: NetworkConfig, levels_per_regime=DEFAULT_LEVELS,
                        change_points=DEFAULT_CHANGE_POINTS, horizon: int = DEFAULT_HORIZON) -> RequestTrace:
    levels = np.asarray(levels_per_regime, dtype=np.int64)
    change_points = tuple(int(c) for c in change_points)
    if levels.ndim != 2 or levels.shape[1] != config.n_servers:
        raise TraceError("each regime needs one level per server")
    if np.any(levels < 0) or np.any(levels > config.capacity_array):
        raise TraceError("level exceeds capacity")
    if any(not 1 <= c <= horizon for c in change_points):
        raise TraceError("change points must lie in [1, horizon]")
    schedule = RegimeSchedule(change_points, tuple(tuple(int(x) for x in lv) for lv in levels))
    requests = levels[schedule.regime_of(horizon)]
    prov = {"generator": "piecewise_fixed", "change_points": list(change_points),
            "regime_params": levels.tolist()}
    return RequestTrace(requests, prov)


def gen_poisson_regimes(config: NetworkConfig, seed: int, horizon: int = DEFAULT_HORIZON,
                        region_mean: float = 250.0, mean_choices=(2, 3, 4, 5, 6), clip: int = 10,
                        unique: bool = True, boundary: str = "geometric") -> RequestTrace:
    """Poisson requests whose per-node means switch at random region boundaries.

    Region lengths are i.i.d. with mean ``region_mean``: geometric by default, or an
    exponential draw rounded up with ``boundary="exponential"``. Within a region every
    node gets its own mean from ``mean_choices`` (without replacement when ``unique``).
    """
    mean_choices = [int(m) for m in mean_choices]
    if not mean_choices:
        raise TraceError("mean_choices is empty")
    if unique and len(mean_choices) < config.n_servers:
        raise TraceError("fewer mean choices than servers with unique means per region")
    if clip > min(config.capacities):
        raise TraceError("clip exceeds the smallest capacity")
    if boundary not in ("geometric", "exponential"):
        raise TraceError(f"unknown boundary process {boundary!r}")
    rng = np.random.default_rng(seed)
    ends = []
    covered = 0
    while covered < horizon:
        if boundary == "geometric":
            length = int(rng.geometric(1.0 / region_mean))
        else:
            length = max(1, int(np.ceil(rng.exponential(region_mean))))
        covered += length
        ends.append(covered)
    means = np.array([rng.choice(mean_choices, size=config.n_servers, replace=not unique)
                      for _ in ends], dtype=np.int64)
    change_points = [min(e, horizon) for e in ends[:-1]]
    schedule = RegimeSchedule(tuple(change_points), tuple(tuple(int(x) for x in m) for m in means))
    lam = means[schedule.regime_of(horizon)]
    requests = np.minimum(rng.poisson(lam), clip).astype(np.int64)
    prov = {"generator": "poisson_regimes", "seed": int(seed), "region_mean": region_mean,
            "mean_choices": mean_choices, "clip": clip, "unique": unique, "boundary": boundary,
            "change_points": change_points, "regime_params": means.tolist()}
    return RequestTrace(requests, prov)


def trace_to_csv(trace: RequestTrace) -> str:
    buf = io.StringIO()
    buf.write("# provenance: " + json.dumps(trace.provenance, sort_keys=True) + "\n")
    n = trace.requests.shape[1]
    buf.write("t," + ",".join(f"b{i + 1}" for i in range(n)) + "\n")
    for t, row in enumerate(trace.requests, start=1):
        buf.write(f"{t}," + ",".join(str(int(x)) for x in row) + "\n")
    return buf.getvalue()


def save_trace(trace: RequestTrace, path) -> None:
    Path(path).write_text(trace_to_csv(trace))


def load_trace(path, config: NetworkConfig | None = None) -> RequestTrace:
    prov = {}
    rows = []
    header = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("provenance:"):
                prov = json.loads(body[len("provenance:"):])
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            if cells[0] != "t" or any(c != f"b{i + 1}" for i, c in enumerate(cells[1:])):
                raise TraceError(f"bad trace header {line!r}")
            header = cells
            continue
        if len(cells) != len(header):
            raise TraceError(f"line {lineno}: expected {len(header)} fields")
        try:
            t, *vals = (int(c) for c in cells)
        except ValueError:
            raise TraceError(f"line {lineno}: non-integer field") from None
        if t != len(rows) + 1:
            raise TraceError(f"line {lineno}: slot {t} out of order")
        rows.append(vals)
    if header is None or not rows:
        raise TraceError("empty trace")
    trace = RequestTrace(np.array(rows, dtype=np.int64), prov)
    if config is not None:
        trace.validate(config)
    return trace
