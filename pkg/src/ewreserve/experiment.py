"""Seeded experiment runs: EW and RL on a shared trace, outputs and offline verification."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .metrics import constraint_bound_rhs, hindsight_optimum, regret_bound_rhs
from .network import ActionSpace, NetworkConfig, cost_bound_theta, enumerate_actions, default_network
from .policy import EwParams, init_policy, observe_row, sample_action
from .rl import RlParams, init_rl, rl_step
from .scenarios import RequestTrace, gen_piecewise_fixed, gen_poisson_regimes, load_trace, trace_to_csv
from .transfer import get_table

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_BOUND_FAILED = 3

RECORD_COLUMNS = ("t", "action_index", "reservation_cost", "blocking_cost", "expected_reservation_cost",
                  "expected_blocking_cost", "realized_regret", "expected_regret", "avg_regret",
                  "avg_expected_digamma", "dist_l2")
SUMMARY_COLUMNS = ("algo", "seed", "horizon", "final_regret", "final_expected_regret", "final_avg_regret",
                   "avg_expected_digamma", "regret_bound", "constraint_bound", "regret_within_bound",
                   "constraint_within_bound", "hindsight_index", "hindsight_cost", "hindsight_feasible",
                   "theta", "theta_exhaustive", "eta", "lam", "rl_variant", "config_hash", "version")
WORKERS_ENV = "EWRESERVE_WORKERS"


def rng_stream(master_seed: int, name: str) -> np.random.Generator:
    """Independent generator per named purpose, all derived from one master seed."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), zlib.crc32(name.encode())]))


@dataclass
class ExperimentConfig:
    network: NetworkConfig = field(default_factory=default_network)
    scenario: dict = field(default_factory=lambda: {"generator": "fixed"})
    algo: str = "both"
    horizon: int = 5000
    eta: float | None = None
    lam: float = 32.0
    rl: RlParams = field(default_factory=RlParams)
    seeds: tuple[int, ...] = (42,)
    delta: float = 0.05
    aggregate_caps: bool = True

    def __post_init__(self):
        if self.algo not in ("ew", "rl", "both"):
            raise ValueError(f"algo must be ew, rl or both, not {self.algo!r}")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if self.scenario.get("generator") not in ("fixed", "poisson", "file"):
            raise ValueError("scenario generator must be fixed, poisson or file")
        if self.scenario["generator"] == "file" and not Path(self.scenario["path"]).exists():
            raise FileNotFoundError(self.scenario["path"])
        self.seeds = tuple(int(s) for s in self.seeds)

    @property
    def ew_params(self) -> EwParams:
        if self.eta is None:
            return EwParams.for_horizon(self.horizon, self.lam)
        return EwParams(self.eta, self.lam)

    @property
    def algos(self) -> tuple[str, ...]:
        return ("ew", "rl") if self.algo == "both" else (self.algo,)

    def to_dict(self) -> dict:
        d = {"network": self.network.to_dict(), "scenario": self.scenario, "algo": self.algo,
             "horizon": self.horizon, "eta": self.eta, "lam": self.lam, "rl": asdict(self.rl),
             "seeds": list(self.seeds), "delta": self.delta, "aggregate_caps": self.aggregate_caps}
        return d

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("seeds")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> "ExperimentConfig":
        d = dict(d)
        net = d.pop("network", None)
        if isinstance(net, str):
            path = Path(net) if base is None or Path(net).is_absolute() else base / net
            d["network"] = NetworkConfig.load(path)
        elif isinstance(net, dict):
            d["network"] = NetworkConfig.from_dict(net)
        if "rl" in d:
            d["rl"] = RlParams(**d["rl"])
        scen = d.get("scenario")
        if scen and scen.get("generator") == "file" and base is not None and not Path(scen["path"]).is_absolute():
            d["scenario"] = {**scen, "path": str(base / scen["path"])}
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base=path.parent)


def make_trace(cfg: ExperimentConfig, seed: int) -> RequestTrace:
    scen = dict(cfg.scenario)
    kind = scen.pop("generator")
    if kind == "fixed":
        return gen_piecewise_fixed(cfg.network, horizon=cfg.horizon, **scen)
    if kind == "poisson":
        # a fixed scenario seed shares one trace across run seeds
        trace_seed = scen.pop("seed", None)
        if trace_seed is None:
            trace_seed = int(rng_stream(seed, "trace").integers(2**63 - 1))
        return gen_poisson_regimes(cfg.network, trace_seed, horizon=cfg.horizon, **scen)
    trace = load_trace(scen["path"], cfg.network)
    if trace.horizon < cfg.horizon:
        raise ValueError(f"trace has {trace.horizon} slots, horizon is {cfg.horizon}")
    return RequestTrace(trace.requests[:cfg.horizon], trace.provenance)


@dataclass
class AlgoRun:
    """Per-slot series of one algorithm on one trace."""

    algo: str
    action_index: np.ndarray
    reservation_cost: np.ndarray
    blocking_cost: np.ndarray
    expected_reservation_cost: np.ndarray
    expected_blocking_cost: np.ndarray
    expected_digamma: np.ndarray
    dist_l2: np.ndarray
    realized_regret: np.ndarray | None = None
    expected_regret: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return len(self.action_index)

    @property
    def avg_regret(self) -> np.ndarray:
        return self.realized_regret / np.arange(1, self.horizon + 1)

    @property
    def avg_expected_digamma(self) -> np.ndarray:
        return np.cumsum(self.expected_digamma) / np.arange(1, self.horizon + 1)

    def records(self) -> list[dict]:
        avg_r = self.avg_regret
        avg_d = self.avg_expected_digamma
        return [
            {"t": t + 1, "action_index": int(self.action_index[t]),
             "reservation_cost": self.reservation_cost[t], "blocking_cost": self.blocking_cost[t],
             "expected_reservation_cost": self.expected_reservation_cost[t],
             "expected_blocking_cost": self.expected_blocking_cost[t],
             "realized_regret": self.realized_regret[t], "expected_regret": self.expected_regret[t],
             "avg_regret": avg_r[t], "avg_expected_digamma": avg_d[t], "dist_l2": self.dist_l2[t]}
            for t in range(self.horizon)
        ]


def _empty(horizon):
    return {k: np.zeros(horizon) for k in ("res", "blk", "eres", "eblk", "edig", "dist")}


def run_ew(config: NetworkConfig, space: ActionSpace, requests, params: EwParams, rng: np.random.Generator,
           table=None, theta: float | None = None, checkpoint: Path | None = None) -> AlgoRun:
    """Draw from P^t, reveal B^t, pay, then fold B^t into the weights."""
    table = table if table is not None else get_table(config)
    horizon = len(requests)
    s = _empty(horizon)
    actions = np.zeros(horizon, dtype=np.int64)
    costs = space.reservation_costs
    state = init_policy(space, params)
    prev = state.distribution
    for t in range(horizon):
        p = state.distribution
        i = sample_action(state, rng)
        c0 = table.blocking_row(requests[t], space.actions)
        state = observe_row(state, costs, c0, config.budget)
        dig = state.digammas()
        actions[t] = i
        s["res"][t] = costs[i]
        s["blk"][t] = c0[i]
        s["eres"][t] = p @ costs
        s["eblk"][t] = p @ c0
        s["edig"][t] = p @ dig
        s["dist"][t] = np.linalg.norm(p - prev)
        prev = p
        if theta is not None:
            ct, cv = table.lookup(space.actions[i], requests[t])
            if max(costs[i], ct, cv) > theta + 1e-12:
                raise AssertionError(f"slot {t + 1}: realized cost exceeds theta={theta}")
    if checkpoint is not None:
        state.save(checkpoint)
    return AlgoRun("ew", actions, s["res"], s["blk"], s["eres"], s["eblk"], s["edig"], s["dist"])


def run_rl(config: NetworkConfig, space: ActionSpace, requests, params: RlParams, rng: np.random.Generator,
           table=None) -> AlgoRun:
    table = table if table is not None else get_table(config)
    horizon = len(requests)
    s = _empty(horizon)
    actions = np.zeros(horizon, dtype=np.int64)
    costs = space.reservation_costs
    state = init_rl(config, space, params, rng)
    cum_constraint = np.zeros(len(space))
    for t in range(horizon):
        b_prev = requests[t - 1] if t > 0 else None
        _, state = rl_step(state, config, space, b_prev, rng, table)
        i = state.last_action
        c0 = table.blocking_row(requests[t], space.actions)
        cum_constraint += c0 - config.budget
        actions[t] = i
        s["res"][t] = s["eres"][t] = costs[i]
        s["blk"][t] = s["eblk"][t] = c0[i]
        # a deterministic choice is a point-mass distribution
        s["edig"][t] = max(0.0, cum_constraint[i] / (t + 1))
    s["dist"][:] = np.nan
    if state.clamped:
        log.warning("RL output clamped %d times", state.clamped)
    return AlgoRun("rl", actions, s["res"], s["blk"], s["eres"], s["eblk"], s["edig"], s["dist"])


@dataclass
class RunResult:
    seed: int
    cfg: ExperimentConfig
    trace: RequestTrace
    runs: dict
    summary: list
    wall_clock: float = 0.0

    @property
    def infeasible(self) -> bool:
        return any(not row["hindsight_feasible"] for row in self.summary)

    @property
    def constraint_failed(self) -> bool:
        return any(row["constraint_within_bound"] is False for row in self.summary)


def summarize(run: AlgoRun, hind, theta, cfg: ExperimentConfig, n_actions: int, seed: int) -> dict:
    params = cfg.ew_params
    horizon = run.horizon
    rb = regret_bound_rhs(theta.value, params.eta, params.lam, n_actions, cfg.delta, horizon)
    cb = constraint_bound_rhs(theta.value, params.eta, params.lam, n_actions, horizon,
                              hind.reservation_cost) if params.lam > 0 else math.nan
    avg_dig = float(run.avg_expected_digamma[-1])
    is_ew = run.algo == "ew"
    return {
        "algo": run.algo, "seed": seed, "horizon": horizon,
        "final_regret": float(run.realized_regret[-1]),
        "final_expected_regret": float(run.expected_regret[-1]),
        "final_avg_regret": float(run.avg_regret[-1]),
        "avg_expected_digamma": avg_dig,
        "regret_bound": rb if is_ew else math.nan,
        "constraint_bound": cb if is_ew else math.nan,
        "regret_within_bound": bool(run.realized_regret[-1] <= rb) if is_ew else "",
        "constraint_within_bound": bool(avg_dig <= cb) if is_ew and cb == cb else "",
        "hindsight_index": hind.action_index, "hindsight_cost": hind.reservation_cost,
        "hindsight_feasible": hind.feasible, "theta": theta.value, "theta_exhaustive": theta.exhaustive,
        "eta": params.eta, "lam": params.lam,
        "rl_variant": "" if is_ew else ("hard" if cfg.rl.hard_penalty else "soft"),
        "config_hash": cfg.config_hash(), "version": __version__,
    }


def run_seed(cfg: ExperimentConfig, seed: int, trace: RequestTrace | None = None) -> RunResult:
    start = time.perf_counter()
    config = cfg.network
    space = enumerate_actions(config)
    table = get_table(config, cfg.aggregate_caps)
    theta = cost_bound_theta(config, space)
    trace = trace if trace is not None else make_trace(cfg, seed)
    trace.validate(config)
    requests = trace.requests[:cfg.horizon]
    hind = hindsight_optimum(config, space, requests, table)
    runs = {}
    for algo in cfg.algos:
        if algo == "ew":
            run = run_ew(config, space, requests, cfg.ew_params, rng_stream(seed, "ew"), table, theta.value)
        else:
            run = run_rl(config, space, requests, cfg.rl, rng_stream(seed, "rl"), table)
        run.realized_regret = np.cumsum(run.reservation_cost - hind.reservation_cost)
        run.expected_regret = np.cumsum(run.expected_reservation_cost - hind.reservation_cost)
        runs[algo] = run
    summary = [summarize(r, hind, theta, cfg, len(space), seed) for r in runs.values()]
    return RunResult(seed, cfg, trace, runs, summary, time.perf_counter() - start)


def _run_seed_star(args):
    return run_seed(*args)


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> list[RunResult]:
    """One :class:`RunResult` per seed, fanned out over ``EWRESERVE_WORKERS`` processes."""
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    jobs = [(cfg, s) for s in cfg.seeds]
    if workers <= 1 or len(jobs) == 1:
        return [run_seed(*j) for j in jobs]
    import multiprocessing as mp

    with mp.get_context("fork").Pool(workers) as pool:
        return pool.map(_run_seed_star, jobs)


# -- output ---------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "nan" if x != x else repr(x)
    return str(x)


def rows_to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def emit_outputs(result: RunResult, out_dir) -> Path:
    from .plotting import write_panels

    run_dir = Path(out_dir) / f"seed_{result.seed}"
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {run_dir}: {e}") from e
    (run_dir / "trace.csv").write_text(trace_to_csv(result.trace))
    (run_dir / "experiment.json").write_text(json.dumps(result.cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    for algo, run in result.runs.items():
        (run_dir / f"{algo}.csv").write_text(rows_to_csv(RECORD_COLUMNS, run.records()))
    (run_dir / "summary.csv").write_text(rows_to_csv(SUMMARY_COLUMNS, result.summary))
    (run_dir / "timing.json").write_text(json.dumps({"wall_clock_s": result.wall_clock,
                                                     "kernels": kernels.backend.NAME}) + "\n")
    write_panels(result, run_dir)
    return run_dir


# -- verification ---------------------------------------------------------


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class Verification:
    run_dir: Path
    problems: list = field(default_factory=list)
    regret_violations: int = 0
    constraint_failures: int = 0
    infeasible: bool = False
    checked: int = 0


def verify_run_dir(run_dir, tol: float = 1e-9) -> Verification:
    """Recompute hindsight, regret and bounds for one seed directory and compare with its files."""
    run_dir = Path(run_dir)
    cfg = ExperimentConfig.from_dict(json.loads((run_dir / "experiment.json").read_text()))
    config = cfg.network
    space = enumerate_actions(config)
    table = get_table(config, cfg.aggregate_caps)
    trace = load_trace(run_dir / "trace.csv", config)
    requests = trace.requests[:cfg.horizon]
    hind = hindsight_optimum(config, space, requests, table)
    theta = cost_bound_theta(config, space)
    summary = {row["algo"]: row for row in read_csv(run_dir / "summary.csv")}
    v = Verification(run_dir, infeasible=not hind.feasible)
    for algo in cfg.algos:
        rows = read_csv(run_dir / f"{algo}.csv")
        if len(rows) != cfg.horizon:
            v.problems.append(f"{algo}: {len(rows)} rows, expected {cfg.horizon}")
            continue
        idx = np.array([int(r["action_index"]) for r in rows])
        res = np.array([float(r["reservation_cost"]) for r in rows])
        blk = np.array([float(r["blocking_cost"]) for r in rows])
        eres = np.array([float(r["expected_reservation_cost"]) for r in rows])
        if not np.array_equal(res, space.reservation_costs[idx]):
            v.problems.append(f"{algo}: reservation costs disagree with logged actions")
        c0 = table.transfer + table.violation
        expect_blk = np.array([c0[table.indices(b, space.actions[i][None, :])[0]] for b, i in zip(requests, idx)])
        if not np.array_equal(blk, expect_blk):
            v.problems.append(f"{algo}: blocking costs disagree with the transfer solver")
        regret = np.cumsum(res - hind.reservation_cost)
        eregret = np.cumsum(eres - hind.reservation_cost)
        logged = np.array([float(r["realized_regret"]) for r in rows])
        elogged = np.array([float(r["expected_regret"]) for r in rows])
        if np.max(np.abs(regret - logged)) > tol * max(1.0, np.abs(regret).max()):
            v.problems.append(f"{algo}: realized regret does not recompute")
        if np.max(np.abs(eregret - elogged)) > tol * max(1.0, np.abs(eregret).max()):
            v.problems.append(f"{algo}: expected regret does not recompute")
        row = summary.get(algo)
        if row is None:
            v.problems.append(f"{algo}: missing from summary")
            continue
        if int(row["hindsight_index"]) != hind.action_index:
            v.problems.append(f"{algo}: hindsight action {row['hindsight_index']} != recomputed {hind.action_index}")
        if abs(float(row["final_regret"]) - regret[-1]) > tol * max(1.0, abs(regret[-1])):
            v.problems.append(f"{algo}: summary regret does not recompute")
        avg_dig = float(rows[-1]["avg_expected_digamma"])
        if abs(float(row["avg_expected_digamma"]) - avg_dig) > tol:
            v.problems.append(f"{algo}: summary penalty average does not match the series")
        if algo == "ew":
            p = cfg.ew_params
            rb = regret_bound_rhs(theta.value, p.eta, p.lam, len(space), cfg.delta, cfg.horizon)
            if regret[-1] > rb:
                v.regret_violations += 1
            if p.lam > 0:
                cb = constraint_bound_rhs(theta.value, p.eta, p.lam, len(space), cfg.horizon, hind.reservation_cost)
                if avg_dig > cb:
                    v.constraint_failures += 1
        v.checked += 1
    return v


def verify(path, min_seeds: int = 100, max_violation_rate: float = 0.05) -> tuple[int, list[Verification]]:
    """Verify a seed directory or a directory of seed directories; returns (exit code, reports).

    Constraint-bound failures are hard failures. Regret-bound violations are only
    flagged, unless at least ``min_seeds`` seeds were checked and more than
    ``max_violation_rate`` of them violate.
    """
    path = Path(path)
    dirs = [path] if (path / "summary.csv").exists() else sorted(p for p in path.glob("seed_*") if p.is_dir())
    if not dirs:
        raise FileNotFoundError(f"no run directories under {path}")
    reports = [verify_run_dir(d) for d in dirs]
    violated = sum(r.regret_violations > 0 for r in reports)
    if any(r.problems for r in reports) or any(r.constraint_failures for r in reports):
        return EXIT_BOUND_FAILED, reports
    if len(reports) >= min_seeds and violated / len(reports) > max_violation_rate:
        return EXIT_BOUND_FAILED, reports
    if any(r.infeasible for r in reports):
        return EXIT_INFEASIBLE, reports
    return EXIT_OK, reports
