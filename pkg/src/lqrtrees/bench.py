"""Benchmark registry and the experiment suite runner.

Each benchmark pairs the problem with its tracking costs.  The terminal
weight Q0 is the infinite-horizon Riccati solution of the linearization at
the goal equilibrium: the constant initial demonstration then carries the
stationary value function, and late tracking entries regulate with a gain
that actually stabilizes (a plain identity terminal weight does not).
"""

import csv
import dataclasses
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_continuous_are

from . import artifacts, synthesis
from .dynamics import BENCHMARKS
from .lqr import LqrCosts


def terminal_riccati_weight(sys, spec, Q, R):
    """Infinite-horizon Riccati solution at the goal equilibrium."""
    A, B = sys.jac(spec.x_goal, spec.u_goal)
    return solve_continuous_are(A, B, np.atleast_2d(Q), np.atleast_2d(R))


_COST_PARAMS = {
    "pendulum": (np.eye(2), np.eye(1)),
    "cartpole": (np.diag([100.0, 30.0, 100.0, 10.0]), np.array([[0.1]])),
    "quadrotor1": (np.eye(12), np.eye(4)),
    "quadrotor2": (np.eye(12), np.eye(4)),
}


def get_problem(name):
    """(ControlSystem, ProblemSpec, LqrCosts) for a named benchmark."""
    if name not in BENCHMARKS:
        raise KeyError(f"unknown problem '{name}' (have {sorted(BENCHMARKS)})")
    sys, spec = BENCHMARKS[name]()
    Q, R = _COST_PARAMS[name]
    Q0 = terminal_riccati_weight(sys, spec, Q, R)
    return sys, spec, LqrCosts(Q, Q0, R)


def run_single(name, mode, seed, out_dir=None, overrides=None):
    """One synthesis run; writes the artifact directory when out_dir given.
    Returns (tree, metrics)."""
    sys, spec, costs = get_problem(name)
    if overrides:
        spec_over = {k: v for k, v in overrides.items()
                     if k in ("horizon", "step")}
        if spec_over:
            spec = dataclasses.replace(spec, **spec_over)
        overrides = {k: v for k, v in overrides.items() if k not in spec_over}
    cfg = synthesis.SynthesisConfig(seed=seed, baseline=mode, **(overrides or {}))
    tree, metrics = synthesis.synthesize(sys, spec, costs, cfg)
    if out_dir:
        artifacts.save_run(out_dir, sys, spec, tree, metrics, cfg)
    return tree, metrics


@dataclass
class ExperimentSuite:
    """A grid of (problem, mode) cells, each repeated over the given seeds."""

    problems: list
    modes: list
    repeats: int = 5
    seeds: list = field(default_factory=list)
    wallclock_cap: float = None
    clean_samples: int = 1000
    out_root: str = "suite_out"
    parallel: int = 1

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not self.seeds:
            self.seeds = list(range(self.repeats))
        if len(self.seeds) != self.repeats:
            raise ValueError("seeds length must equal repeats")


CSV_COLUMNS = ("problem", "mode", "N_dem", "s_dem", "t_total_s", "timeout_any")


def run_suite(suite):
    """Run every (problem, mode, seed) cell; per-cell averages go to
    results.csv / results.json under the suite's output root (per-run
    artifact directories are retained)."""
    cells = [(p, m) for p in suite.problems for m in suite.modes]
    os.makedirs(suite.out_root, exist_ok=True)

    def one_run(args):
        prob, mode, seed, run_dir = args
        overrides = {"termination_clean_samples": suite.clean_samples}
        if suite.wallclock_cap:
            overrides["wallclock_cap"] = suite.wallclock_cap
        try:
            _, metrics = run_single(prob, mode, seed, run_dir, overrides)
            return metrics.to_dict()
        except Exception as exc:  # a failed run must not sink the suite
            return {"error": str(exc), "n_dem": None, "s_dem": None,
                    "t_total": None, "timed_out": True}

    rows = []
    for prob, mode in cells:
        jobs = [(prob, mode, seed,
                 os.path.join(suite.out_root, f"{prob}_{mode}_s{seed}"))
                for seed in suite.seeds]
        if suite.parallel > 1:
            with ThreadPoolExecutor(max_workers=suite.parallel) as ex:
                results = list(ex.map(one_run, jobs))
        else:
            results = [one_run(j) for j in jobs]
        vals = [r for r in results if r.get("n_dem") is not None]
        row = {
            "problem": prob,
            "mode": mode,
            "N_dem": float(np.mean([r["n_dem"] for r in vals])) if vals else None,
            "s_dem": float(np.mean([r["s_dem"] for r in vals if r["s_dem"] is not None]))
                     if any(r["s_dem"] is not None for r in vals) else None,
            "t_total_s": float(np.mean([r["t_total"] for r in vals])) if vals else None,
            "timeout_any": bool(any(r.get("timed_out") for r in results)),
            "runs": results,
        }
        rows.append(row)

    with open(os.path.join(suite.out_root, "results.json"), "w") as f:
        json.dump(rows, f, indent=1)
    with open(os.path.join(suite.out_root, "results.csv"), "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(CSV_COLUMNS)
        for row in rows:
            wr.writerow([row["problem"], row["mode"], row["N_dem"],
                         row["s_dem"], row["t_total_s"], row["timeout_any"]])
    return rows
