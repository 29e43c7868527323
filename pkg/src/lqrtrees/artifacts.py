"""Run-artifact serialization: problem files, demonstration sets, metrics.

A run directory holds:
  config.json    resolved SynthesisConfig + seed
  problem.json   the ProblemSpec (schema below) + system name
  demos.json     the demonstrations: {costs, demos: [{id, times, states,
                 inputs, S?, provenance}]}
  metrics.json   RunMetrics.to_dict()
  trees/*.json   final RRT trees (optional)
  events.log     one JSON event per line

Problem schema: dimensions, boxes as {"lo": [...], "hi": [...]}, obstacles
as {"coords", "a", "A", "alpha", "alpha_demo"}, goal as {"M", "c",
"center"}.  Problem files reference benchmark dynamics by name; custom
right-hand sides do not round-trip through JSON.
"""

import dataclasses
import json
import os

import numpy as np

from . import lqr
from .dynamics import (BENCHMARKS, Box, Goal, Obstacle, ProblemSpec, Trajectory)


def _box_to_dict(box):
    return {"lo": box.lo.tolist(), "hi": box.hi.tolist()}


def _box_from_dict(d):
    return Box(d["lo"], d["hi"])


def spec_to_dict(spec, system_name):
    return {
        "system": system_name,
        "name": spec.name,
        "state_dim": len(spec.x_goal),
        "input_dim": len(spec.u_goal),
        "initial_set": _box_to_dict(spec.initial_box),
        "extra_initial_sets": [_box_to_dict(b) for b in spec.extra_initial_boxes],
        "obstacles": [
            {"coords": list(o.coords), "a": o.a.tolist(), "A": o.A.tolist(),
             "alpha": o.alpha, "alpha_demo": o.alpha_demo}
            for o in spec.obstacles
        ],
        "goal": {"M": spec.goal.M.tolist(), "c": spec.goal.c,
                 "center": spec.goal.center.tolist()},
        "input_set": _box_to_dict(spec.input_box),
        "state_bounds": _box_to_dict(spec.state_box),
        "demo_state_bounds": _box_to_dict(spec.demo_state_box),
        "demo_input_set": _box_to_dict(spec.demo_input_box),
        "clearance": spec.clearance,
        "horizon": spec.horizon,
        "step": spec.step,
        "x_goal": spec.x_goal.tolist(),
        "u_goal": spec.u_goal.tolist(),
        "actions": spec.actions.tolist(),
        "metric_weights": spec.metric_weights.tolist(),
        "history_bias": spec.history_bias,
        "sample_avoid_obstacles": spec.sample_avoid_obstacles,
    }


def spec_from_dict(d):
    spec = ProblemSpec(
        name=d["name"],
        initial_box=_box_from_dict(d["initial_set"]),
        obstacles=tuple(
            Obstacle(tuple(o["coords"]), o["a"], o["A"], o["alpha"], o.get("alpha_demo"))
            for o in d["obstacles"]
        ),
        goal=Goal(np.asarray(d["goal"]["M"]), d["goal"]["c"], np.asarray(d["goal"]["center"])),
        input_box=_box_from_dict(d["input_set"]),
        state_box=_box_from_dict(d["state_bounds"]),
        demo_state_box=_box_from_dict(d["demo_state_bounds"]),
        demo_input_box=_box_from_dict(d["demo_input_set"]),
        clearance=d["clearance"],
        horizon=d["horizon"],
        step=d["step"],
        x_goal=np.asarray(d["x_goal"]),
        u_goal=np.asarray(d["u_goal"]),
        actions=np.asarray(d["actions"]),
        metric_weights=np.asarray(d["metric_weights"]),
        history_bias=d.get("history_bias", False),
        sample_avoid_obstacles=d.get("sample_avoid_obstacles", False),
        extra_initial_boxes=tuple(_box_from_dict(b) for b in d.get("extra_initial_sets", [])),
    )
    return d["system"], spec


def load_problem(path):
    """Returns (ControlSystem, ProblemSpec) from a problem JSON file; the
    dynamics come from the named benchmark."""
    with open(path) as f:
        d = json.load(f)
    system_name, spec = spec_from_dict(d)
    if system_name not in BENCHMARKS:
        raise ValueError(f"unknown system '{system_name}' in problem file")
    sys, _ = BENCHMARKS[system_name]()
    return sys, spec


def demos_to_dict(tree, include_riccati=False):
    out = {
        "costs": {"Q": tree.costs.Q.tolist(), "Q0": tree.costs.Q0.tolist(),
                  "R": tree.costs.R.tolist()},
        "assignment": tree.assignment,
        "narrowing": tree.narrowing,
        "funnel_d": [None if not np.isfinite(v) else v for v in tree.funnel_d],
        "demos": [],
    }
    for d in tree.demos:
        rec = {
            "id": d.id,
            "times": d.traj.times.tolist(),
            "states": d.traj.states.tolist(),
            "inputs": d.traj.inputs.tolist(),
            "provenance": d.parent_info,
        }
        if include_riccati:
            rec["S"] = d.S.reshape(d.n_knots, -1).tolist()
        out["demos"].append(rec)
    return out


def demos_from_dict(d, sys):
    """Rebuild an LqrTree from demos.json content; Riccati data is recomputed
    (deterministically) when it was not serialized."""
    costs = lqr.LqrCosts(np.asarray(d["costs"]["Q"]), np.asarray(d["costs"]["Q0"]),
                         np.asarray(d["costs"]["R"]))
    tree = lqr.LqrTree(costs, assignment=d.get("assignment", "lqr"),
                       narrowing=d.get("narrowing", 500))
    for rec in d["demos"]:
        traj = Trajectory(np.asarray(rec["times"]), np.asarray(rec["states"]),
                          np.asarray(rec["inputs"]))
        if "S" in rec:
            n = traj.states.shape[1]
            S = np.asarray(rec["S"]).reshape(traj.n_knots, n, n)
            _, K = lqr.riccati_backward(sys, traj, costs)
        else:
            S, K = lqr.riccati_backward(sys, traj, costs)
        tree.add_demo(lqr.Demonstration(traj, S, K, parent_info=rec.get("provenance")))
    funnel = d.get("funnel_d")
    if funnel:
        tree.funnel_d = np.array([np.inf if v is None else v for v in funnel])
    return tree


def save_run(out_dir, sys, spec, tree, metrics, cfg, rrt_trees=None):
    """Write the full artifact directory for one synthesis run."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w") as f:
        json.dump(dataclasses.asdict(cfg), f, indent=1, default=str)
    with open(os.path.join(out_dir, "problem.json"), "w") as f:
        json.dump(spec_to_dict(spec, sys.name), f, indent=1)
    with open(os.path.join(out_dir, "demos.json"), "w") as f:
        json.dump(demos_to_dict(tree), f)
    with open(os.path.join(out_dir, "metrics.json"), "w") as f:
        json.dump(metrics.to_dict(), f, indent=1)
    with open(os.path.join(out_dir, "events.log"), "w") as f:
        for ev in metrics.events:
            f.write(json.dumps(ev) + "\n")
    if rrt_trees:
        from .rrt import tree_to_dict
        tdir = os.path.join(out_dir, "trees")
        os.makedirs(tdir, exist_ok=True)
        for name, t in rrt_trees.items():
            with open(os.path.join(tdir, f"{name}.json"), "w") as f:
                json.dump(tree_to_dict(t), f)


def load_run_tree(run_dir):
    """(ControlSystem, ProblemSpec, LqrTree) from an artifact directory."""
    sys, spec = load_problem(os.path.join(run_dir, "problem.json"))
    with open(os.path.join(run_dir, "demos.json")) as f:
        tree = demos_from_dict(json.load(f), sys)
    return sys, spec, tree
