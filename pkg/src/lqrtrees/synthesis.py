"""The outer synthesis loop: sample initial states, detect counterexamples by
simulation, and repair them.

Three repair strategies share the loop: the exploring step (bidirectional
RRTs seed the demonstrator from dynamically consistent paths), the simple
baseline (seed with the failed simulation itself), and the funnel baseline
(funnel thresholds shrink around counterexamples; reassignment is tried
before falling back to the simple behavior).
"""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import least_squares

from . import lqr
from .collocation import DemoSeed
from .demonstrator import demo as demo_call
from .dynamics import Trajectory
from .errors import NoEquilibriumInGoal
from .rrt import MetricSpec, RrtTree, connect_round, reconstruct_path

GOAL = lqr.OUTCOME_GOAL


@dataclass
class SynthesisConfig:
    seed: int = 0
    baseline: str = "exploring"            # exploring | simple | funnel
    sample_source: str = "halton"          # halton | uniform
    termination_clean_samples: int = 1000
    clearance_margin: float = 0.05
    max_extensions_per_expansion: int = 500
    max_counterexample_tree: int = 5000
    rrt_retry_cap: int = 200
    max_noop_rounds: int = 50
    narrowing: int = 500
    wallclock_cap: Optional[float] = None
    stop_after_new_demos: Optional[int] = None
    demo_start_box: Optional[object] = None  # restrict demo-tree-branch starts
    demo_max_iter: int = 300

    def __post_init__(self):
        if self.baseline not in ("exploring", "simple", "funnel"):
            raise ValueError("baseline must be exploring, simple or funnel")
        if self.sample_source not in ("halton", "uniform"):
            raise ValueError("sample_source must be halton or uniform")
        if not 0.0 <= self.clearance_margin < 1.0:
            raise ValueError("clearance_margin must lie in [0, 1)")
        for name in ("termination_clean_samples", "max_extensions_per_expansion",
                     "max_counterexample_tree", "rrt_retry_cap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class RunMetrics:
    n_dem: int = 0
    demo_calls: int = 0
    demo_successes: int = 0
    samples: int = 0
    counterexamples: list = field(default_factory=list)
    events: list = field(default_factory=list)
    t_total: float = 0.0
    t_simulation: float = 0.0
    t_rrt: float = 0.0
    t_nlp: float = 0.0
    timed_out: bool = False

    @property
    def s_dem(self):
        return self.demo_successes / self.demo_calls if self.demo_calls else None

    def record_demo_call(self, success, reason):
        self.demo_calls += 1
        if success:
            self.demo_successes += 1
        self.events.append({"event": "demo_call", "success": bool(success),
                            "reason": reason})

    def to_dict(self):
        return {
            "n_dem": self.n_dem,
            "demo_calls": self.demo_calls,
            "demo_successes": self.demo_successes,
            "s_dem": self.s_dem,
            "samples": self.samples,
            "n_counterexamples": len(self.counterexamples),
            "t_total": self.t_total,
            "t_simulation": self.t_simulation,
            "t_rrt": self.t_rrt,
            "t_nlp": self.t_nlp,
            "timed_out": self.timed_out,
        }


# ---------------------------------------------------------------------------
# dense sampling of the initial set


_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def _radical_inverse(k, base):
    inv, denom = 0.0, 1.0
    while k > 0:
        k, rem = divmod(k, base)
        denom *= base
        inv += rem / denom
    return inv


def dense_sequence(spec, cfg, k):
    """k-th element of the Halton sequence scaled to the sampling box W
    (the k-th element uses the radical inverse of k+1).  Coordinates where
    the initial set has zero width stay fixed at their constant value."""
    box = spec.sampling_box()
    free = box.free_dims()
    x = box.lo.copy()
    for d, dim in enumerate(free):
        b = _PRIMES[d % len(_PRIMES)]
        x[dim] = box.lo[dim] + (box.hi[dim] - box.lo[dim]) * _radical_inverse(k + 1, b)
    return x


def _sample_stream(spec, cfg, rng):
    """Yields initial samples; Halton elements (or uniform draws) that fall
    inside a clearance-inflated obstacle are rejected when the spec asks for
    it (initial sets defined as a box minus the obstacles)."""
    box = spec.sampling_box()
    free = box.free_dims()
    k = 0
    while True:
        if cfg.sample_source == "halton":
            x = dense_sequence(spec, cfg, k)
            k += 1
        else:
            x = box.lo.copy()
            x[free] = box.lo[free] + (box.hi[free] - box.lo[free]) * rng.random(len(free))
        if spec.sample_avoid_obstacles and not spec.obstacle_free(x, spec.clearance):
            continue
        yield x


# ---------------------------------------------------------------------------
# tree initialization


def find_goal_equilibrium(sys, spec, tol=1e-9):
    """Numerically solve F(x, u) = 0 near the goal center; the solution must
    lie inside the goal and the input set."""
    n, m = sys.state_dim, sys.input_dim

    def resid(v):
        return sys.rhs(v[:n], v[n:])

    v0 = np.concatenate([spec.goal.center, spec.u_goal])
    if np.max(np.abs(resid(v0))) <= tol:
        x_eq, u_eq = v0[:n], v0[n:]
    else:
        sol = least_squares(resid, v0, xtol=1e-14, ftol=1e-14, gtol=1e-14)
        x_eq, u_eq = sol.x[:n], sol.x[n:]
        if np.max(np.abs(resid(sol.x))) > tol:
            raise NoEquilibriumInGoal("no equilibrium found near the goal center")
    if not spec.goal.contains(x_eq) or not spec.input_box.contains(u_eq):
        raise NoEquilibriumInGoal("equilibrium lies outside the goal or input set")
    return x_eq, u_eq


def initialize_tree(sys, spec, costs, assignment="lqr", narrowing=500):
    """LqrTree seeded with the constant demonstration at the goal equilibrium
    (terminal regulation), Riccati data included."""
    x_eq, u_eq = find_goal_equilibrium(sys, spec)
    K = spec.n_knots
    traj = Trajectory(spec.step * np.arange(K),
                      np.repeat(x_eq[None, :], K, axis=0),
                      np.repeat(u_eq[None, :], K, axis=0))
    S, gains = lqr.riccati_backward(sys, traj, costs)
    tree = lqr.LqrTree(costs, assignment=assignment, narrowing=narrowing)
    tree.add_demo(lqr.Demonstration(traj, S, gains,
                                    parent_info={"source": "initial", "demo_call": 0}))
    return tree


# ---------------------------------------------------------------------------
# sample checking


def _check_batch(tree, sys, spec, X, margin, record=True, run_past_goal=False,
                 check=None):
    """Tracked simulation of a batch; returns (codes, knots, states, inputs,
    demo_idx, entry, via_funnel)."""
    X = np.atleast_2d(X)
    if tree.assignment == "funnel":
        df, kf = tree.assign_funnel_batch(X)
        via = df >= 0
        if np.any(~via):
            d2, k2 = tree.assign_batch(X[~via])
            df, kf = df.copy(), kf.copy()
            df[~via] = d2
            kf[~via] = k2
    else:
        df, kf = tree.assign_batch(X)
        via = np.zeros(len(X), dtype=bool)
    codes, knots, ss, uu, _, _ = lqr.simulate_tracked(
        sys, spec, tree, X, margin=margin, demo_idx=df, entry=kf,
        record=record, run_past_goal=run_past_goal, check=check)
    return codes, knots, ss, uu, df, kf, via


def check_sample(tree, x0, sys, spec, margin=0.0):
    """Simulate the tree policy from x0; success iff the goal is reached
    under the margin-adjusted constraint tests.  Returns (success, Trajectory)."""
    codes, knots, ss, uu, *_ = _check_batch(tree, sys, spec,
                                            np.asarray(x0, dtype=float)[None], margin)
    traj = lqr.tracked_trajectory(spec, ss, uu, codes[0], knots[0], 0)
    return bool(codes[0] == GOAL), traj


def _stage_cost(spec, costs, traj):
    """Accumulated discrete quadratic cost of a trajectory (the demonstrator's
    running cost), used by the funnel baseline to rank failed simulations."""
    dx = traj.states - spec.x_goal
    cx = np.sum(np.sum(costs.Q * dx[:, None, :], axis=-1) * dx, axis=-1)
    cu = np.sum(np.sum(costs.R * traj.inputs[:, None, :], axis=-1) * traj.inputs, axis=-1)
    return float(spec.step * (cx + cu).sum())


# ---------------------------------------------------------------------------
# the exploring step (counterexample tree + demonstration trees)


class _Deadline:
    def __init__(self, cap):
        self.t0 = time.perf_counter()
        self.cap = cap

    def exceeded(self):
        return self.cap is not None and time.perf_counter() - self.t0 > self.cap

    def remaining(self):
        return None if self.cap is None else self.cap - (time.perf_counter() - self.t0)


def _demo_tree_for(tree, demo_id, cache, sys, metric):
    if demo_id not in cache:
        t = RrtTree(sys, metric, reverse_time=True, max_nodes=10 ** 9)
        seen = set()
        d = tree.demos[demo_id]
        for k, xk in enumerate(d.traj.states):
            key = xk.tobytes()
            if key not in seen:
                seen.add(key)
                t.add_root(xk, knot=k)
        cache[demo_id] = t
    return cache[demo_id]


def _fit_knots(xs, us, spec, u_pad):
    """Cut or pad a seed to exactly the horizon's knot count.  Over-long
    seeds keep their head (the terminal constraint pulls the tail into the
    goal); short ones hold their final state under the padding input."""
    K = spec.n_knots
    if len(xs) > K:
        return xs[:K], us[:K]
    if len(xs) < K:
        pad = K - len(xs)
        xs = np.vstack([xs, np.repeat(xs[-1:], pad, axis=0)])
        us = np.vstack([us, np.repeat(u_pad[None, :], pad, axis=0)])
    return xs, us


def _counter_seed(counter_tree, node_idx, spec, states, inputs):
    """Seed for the counterexample branch: RRT path from the root to the
    node, continued by the successful simulation's full-horizon rollout
    (junction input comes from the simulation)."""
    path, _ = reconstruct_path(counter_tree, node_idx, spec)
    sim_xs, sim_us = states[0], inputs[0]
    if len(path) > 1:
        xs = np.vstack([path.states, sim_xs[1:]])
        us = np.vstack([path.inputs[:-1], sim_us])
    else:
        xs, us = sim_xs, sim_us
    xs, us = _fit_knots(xs, us, spec, spec.u_goal)
    return DemoSeed(xs, us, "counterexample_path")


def _demo_branch_seed(demo_tree, node_idx, target_demo, spec):
    """Seed for the demonstration branch: RRT path from the node into the
    demonstration, continued by the demonstration's suffix from the knot the
    path attaches to."""
    path, root = reconstruct_path(demo_tree, node_idx, spec)
    r = demo_tree.root_meta[root]
    xs = np.vstack([path.states[:-1], target_demo.traj.states[r:]])
    us = np.vstack([path.inputs[:-1], target_demo.traj.inputs[r:]])
    xs, us = _fit_knots(xs, us, spec, spec.u_goal)
    return DemoSeed(xs, us, "demo_tree_path")


def exploring_step(tree, x_counter, sys, spec, costs, cfg, rng, metrics,
                   deadline=None):
    """Grow a counterexample tree and demonstration trees bidirectionally,
    checking every added node by simulation; successful counterexample-tree
    nodes and failing demonstration-tree nodes seed the demonstrator.
    Returns once the tree holds a demonstration starting at x_counter, or
    when the counterexample tree hits its size cap."""
    metric = MetricSpec(spec.metric_weights, spec.history_bias)
    demo_check = spec.demo_check_set(cfg.clearance_margin)
    counter = RrtTree(sys, metric, reverse_time=False,
                      max_nodes=cfg.max_counterexample_tree)
    counter.add_root(x_counter)
    demo_trees = {}

    target_demo, _ = lqr.assign(tree, x_counter)
    target_id = target_demo.id
    # running per-demo minimum of the value function over counter-tree nodes
    mins = tree.value_batch(x_counter[None])[0][0].copy()
    mins_rows = 1  # counter nodes folded into `mins` so far

    def add_demo_column(new_demo_id):
        nonlocal mins
        d = tree.demos[new_demo_id]
        X = counter.states[:mins_rows]
        diff = X[:, None, :] - d.traj.states[None]
        vals = np.sum(np.sum(d.S[None] * diff[..., None, :], axis=-1) * diff, axis=-1)
        mins = np.append(mins, vals.min())

    def handle_counter_event(idx):
        """Returns the new demonstration if one was added from x_counter."""
        t0 = time.perf_counter()
        codes, knots, ss, uu, *_ = _check_batch(
            tree, sys, spec, counter.states[idx][None], cfg.clearance_margin,
            run_past_goal=True, check=demo_check)
        metrics.t_simulation += time.perf_counter() - t0
        if codes[0] != GOAL:
            return None
        seed = _counter_seed(counter, idx, spec, ss, uu)
        t0 = time.perf_counter()
        d = demo_call(sys, spec, costs, seed, metrics, max_iter=cfg.demo_max_iter)
        metrics.t_nlp += time.perf_counter() - t0
        if d is None:
            return None
        d.parent_info["demo_call"] = metrics.demo_calls
        d.parent_info["start"] = counter.states[idx].tolist()
        tree.add_demo(d)
        metrics.n_dem += 1
        add_demo_column(d.id)
        return d

    def handle_demo_event(dtree, idx):
        if cfg.demo_start_box is not None and not cfg.demo_start_box.contains(dtree.states[idx]):
            return False
        t0 = time.perf_counter()
        codes, *_ = _check_batch(tree, sys, spec, dtree.states[idx][None], 0.0,
                                 record=False)
        metrics.t_simulation += time.perf_counter() - t0
        if codes[0] == GOAL:
            return False
        seed = _demo_branch_seed(dtree, idx, tree.demos[dtree_ids[id(dtree)]], spec)
        t0 = time.perf_counter()
        d = demo_call(sys, spec, costs, seed, metrics, max_iter=cfg.demo_max_iter)
        metrics.t_nlp += time.perf_counter() - t0
        if d is None:
            return False
        d.parent_info["demo_call"] = metrics.demo_calls
        d.parent_info["start"] = dtree.states[idx].tolist()
        tree.add_demo(d)
        metrics.n_dem += 1
        add_demo_column(d.id)
        return True

    dtree_ids = {}

    # the root itself is tested once at entry with the margin
    d_new = handle_counter_event(0)
    if d_new is not None:
        return tree

    primary_is_counter = True
    noop_rounds = 0
    while True:
        if deadline is not None and deadline.exceeded():
            metrics.timed_out = True
            return tree
        dtree = _demo_tree_for(tree, target_id, demo_trees, sys, metric)
        dtree_ids[id(dtree)] = target_id
        t0 = time.perf_counter()
        if primary_is_counter:
            new_c, new_d = connect_round(counter, dtree, spec, rng,
                                         cfg.rrt_retry_cap,
                                         cfg.max_extensions_per_expansion)
            events = [("c", i) for i in new_c] + [("d", i) for i in new_d]
        else:
            new_d, new_c = connect_round(dtree, counter, spec, rng,
                                         cfg.rrt_retry_cap,
                                         cfg.max_extensions_per_expansion)
            events = [("d", i) for i in new_d] + [("c", i) for i in new_c]
        metrics.t_rrt += time.perf_counter() - t0

        for kind, idx in events:
            if kind == "c":
                d_new = handle_counter_event(idx)
                if d_new is not None:
                    return tree
            else:
                handle_demo_event(dtree, idx)

        if not events:
            noop_rounds += 1
            if noop_rounds >= cfg.max_noop_rounds:
                return tree
        else:
            noop_rounds = 0
        if counter.n_nodes >= cfg.max_counterexample_tree:
            return tree

        # fold the new counter nodes into the running per-demo minima and
        # re-target the demonstration whose value function comes closest
        if counter.n_nodes > mins_rows:
            X = counter.states[mins_rows:]
            V, _, _ = tree.value_batch(X)
            mins = np.minimum(mins, V.min(axis=0))
            mins_rows = counter.n_nodes
        target_id = int(np.argmin(mins))
        primary_is_counter = not primary_is_counter


# ---------------------------------------------------------------------------
# baselines


def simple_step(tree, x_counter, failed_traj, sys, spec, costs, cfg, metrics):
    """One demonstrator call seeded with the failed simulation itself."""
    seed = DemoSeed(failed_traj.states, failed_traj.inputs, "failed_simulation")
    t0 = time.perf_counter()
    d = demo_call(sys, spec, costs, seed, metrics, max_iter=cfg.demo_max_iter)
    metrics.t_nlp += time.perf_counter() - t0
    if d is not None:
        d.parent_info["demo_call"] = metrics.demo_calls
        d.parent_info["start"] = failed_traj.states[0].tolist()
        tree.add_demo(d)
        metrics.n_dem += 1
    return tree


def funnel_step(tree, x_counter, failed_traj, via_funnel, first_demo_id, sys,
                spec, costs, cfg, metrics):
    """Funnel baseline repair: shrink the assigned demo's funnel threshold,
    try reassignments until one simulation succeeds; if every qualifying
    demonstration fails, seed the demonstrator with the cheapest failed
    simulation; if none ever qualified, behave like the simple baseline."""
    failed = []
    if via_funnel:
        lqr.shrink_funnel(tree, first_demo_id, x_counter)
        failed.append((_stage_cost(spec, costs, failed_traj), failed_traj))
        while True:
            pick = lqr.assign_funnel(tree, x_counter)
            if pick is None:
                break
            demo_k, k0 = pick
            t0 = time.perf_counter()
            codes, knots, ss, uu, _, _ = lqr.simulate_tracked(
                sys, spec, tree, x_counter[None], margin=0.0,
                demo_idx=np.array([demo_k.id]), entry=np.array([k0]), record=True)
            metrics.t_simulation += time.perf_counter() - t0
            if codes[0] == GOAL:
                return tree  # reassignment fixed the counterexample
            traj = lqr.tracked_trajectory(spec, ss, uu, codes[0], knots[0], 0)
            failed.append((_stage_cost(spec, costs, traj), traj))
            lqr.shrink_funnel(tree, demo_k.id, x_counter)
        _, seed_traj = min(failed, key=lambda cf: cf[0])
        tag = "failed_simulation_min_cost"
    else:
        seed_traj = failed_traj
        tag = "failed_simulation"
    seed = DemoSeed(seed_traj.states, seed_traj.inputs, tag)
    t0 = time.perf_counter()
    d = demo_call(sys, spec, costs, seed, metrics, max_iter=cfg.demo_max_iter)
    metrics.t_nlp += time.perf_counter() - t0
    if d is not None:
        d.parent_info["demo_call"] = metrics.demo_calls
        d.parent_info["start"] = seed_traj.states[0].tolist()
        tree.add_demo(d)
        metrics.n_dem += 1
    return tree


# ---------------------------------------------------------------------------
# the outer loop


def synthesize(sys, spec, costs, cfg):
    """Run the sampling verification loop until the configured number of
    consecutive counterexample-free samples (or a wall-clock cap).  Returns
    (LqrTree, RunMetrics); deterministic given the config seed."""
    rng = np.random.default_rng(cfg.seed)
    metrics = RunMetrics()
    deadline = _Deadline(cfg.wallclock_cap)
    assignment = "funnel" if cfg.baseline == "funnel" else "lqr"
    tree = initialize_tree(sys, spec, costs, assignment=assignment,
                           narrowing=cfg.narrowing)
    stream = _sample_stream(spec, cfg, rng)
    clean = 0
    while clean < cfg.termination_clean_samples:
        if deadline.exceeded():
            metrics.timed_out = True
            break
        if (cfg.stop_after_new_demos is not None
                and metrics.n_dem >= cfg.stop_after_new_demos):
            break
        x0 = next(stream)
        metrics.samples += 1
        t0 = time.perf_counter()
        codes, knots, ss, uu, df, kf, via = _check_batch(tree, sys, spec,
                                                         x0[None], 0.0)
        metrics.t_simulation += time.perf_counter() - t0
        if codes[0] == GOAL:
            clean += 1
            continue
        clean = 0
        metrics.counterexamples.append(x0.tolist())
        metrics.events.append({"event": "counterexample", "x0": x0.tolist()})
        failed_traj = lqr.tracked_trajectory(spec, ss, uu, codes[0], knots[0], 0)
        if cfg.baseline == "exploring":
            exploring_step(tree, x0, sys, spec, costs, cfg, rng, metrics, deadline)
        elif cfg.baseline == "simple":
            simple_step(tree, x0, failed_traj, sys, spec, costs, cfg, metrics)
        else:
            funnel_step(tree, x0, failed_traj, bool(via[0]), int(df[0]), sys,
                        spec, costs, cfg, metrics)
    metrics.t_total = time.perf_counter() - deadline.t0
    return tree, metrics


def prune(tree, sys, spec, samples, margin=0.0):
    """Greedily drop demonstrations (never the initial one, id 0) whose
    removal keeps every validation sample successful; re-validates after
    each removal.  Returns a rebuilt tree (demo ids are re-assigned)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))

    def all_pass(demos):
        trial = lqr.LqrTree(tree.costs, assignment=tree.assignment,
                            narrowing=tree.narrowing)
        for d in demos:
            trial.add_demo(lqr.Demonstration(d.traj, d.S, d.gains,
                                             parent_info=d.parent_info))
        codes, *_ = lqr.simulate_tracked(sys, spec, trial, samples,
                                         margin=margin, record=False)
        return bool(np.all(codes == GOAL)), trial

    kept = list(tree.demos)
    for cand in sorted(range(1, len(kept)), reverse=True):
        if cand >= len(kept):
            continue
        trial_demos = kept[:cand] + kept[cand + 1:]
        ok, _ = all_pass(trial_demos)
        if ok:
            kept = trial_demos
    ok, pruned = all_pass(kept)
    return pruned
