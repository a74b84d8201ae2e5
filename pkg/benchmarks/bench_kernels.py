"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 3] [--json out.json]

Reports the transfer-table build (every difference vector of the default
3-node instance), RL back-processing for one slot, and a short end-to-end
run of both algorithms. Results from the two backends are checked for
equality before timings are printed.
"""

import argparse
import json
import sys
import time

import numpy as np

from ewreserve import _pykernels, kernels
from ewreserve.experiment import ExperimentConfig, run_seed
from ewreserve.network import default_network
from ewreserve.transfer import TransferTable, get_table


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_table(mod, repeat):
    cfg = default_network()
    lo, hi = TransferTable.diff_bounds(cfg)
    grids = np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lo, hi)], indexing="ij")
    diffs = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
    return best_of(lambda: mod.solve_batch(diffs, cfg.violation_array, cfg.transfer_matrix, True), repeat)


def bench_back_process(mod, repeat, iters=50, n_fired=8, rules=1331, levels=1000):
    rng = np.random.default_rng(0)
    critic0 = rng.standard_normal((rules, levels))
    fired = rng.choice(rules, n_fired, replace=False).astype(np.int64)
    phi = rng.random(n_fired)
    phi /= phi.sum()
    explore = rng.random((iters, n_fired))
    rand_levels = rng.integers(0, levels, (iters, n_fired))
    rewards = -rng.random(levels)

    def go():
        critic = critic0.copy()
        mod.back_process(critic, fired, phi, explore, rand_levels, 0.5, 0.995, rewards, levels)
        return critic

    return best_of(go, repeat)


def bench_run(name, horizon):
    kernels.use(name)
    get_table.cache_clear()
    cfg = ExperimentConfig(scenario={"generator": "poisson"}, horizon=horizon)
    t0 = time.perf_counter()
    res = run_seed(cfg, 1)
    return time.perf_counter() - t0, res


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--horizon", type=int, default=500, help="slots for the end-to-end run")
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)
    if kernels.compiled is None:
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1

    rows = []
    t_py, out_py = bench_table(_pykernels, 1)
    t_cy, out_cy = bench_table(kernels.compiled, args.repeat)
    assert all(np.array_equal(a, b) for a, b in zip(out_py, out_cy)), "table mismatch"
    rows.append(("transfer table (9261 solves)", t_py, t_cy))

    t_py, c_py = bench_back_process(_pykernels, args.repeat)
    t_cy, c_cy = bench_back_process(kernels.compiled, args.repeat)
    assert np.array_equal(c_py, c_cy), "back-processing mismatch"
    rows.append(("RL back-processing (one slot)", t_py, t_cy))

    saved = kernels.backend
    try:
        t_py, r_py = bench_run("python", args.horizon)
        t_cy, r_cy = bench_run("cython", args.horizon)
    finally:
        kernels.backend = saved
    for algo in r_py.runs:
        assert np.array_equal(r_py.runs[algo].action_index, r_cy.runs[algo].action_index), "run mismatch"
    rows.append((f"end-to-end run, T={args.horizon}", t_py, t_cy))

    print(f"{'kernel':34s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s}")
    for name, a, b in rows:
        print(f"{name:34s} {a:10.4f} {b:10.4f} {a / b:8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump([{"kernel": n, "python_s": a, "cython_s": b} for n, a, b in rows], fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
