"""The demonstrator: turn seed trajectories into clearance-valid demonstrations.

demo() = transcribe + SQP solve + backward Riccati pass + an independent
re-check of the clearance conditions (goal margin, input margin, obstacle
margin, defect residuals) at every knot.  A demonstrator call that fails at
any stage returns None; failures are first-class results that feed the
success-rate statistics of the synthesis loop.
"""

import logging

import numpy as np

from .collocation import CollocationNlp, DemoSeed
from .dynamics import Trajectory, rk4_step
from .errors import LossOfPositivity
from .lqr import Demonstration, riccati_backward
from .sqp import solve_nlp

log = logging.getLogger(__name__)


def transcribe(sys, spec, costs, seed):
    """Build the collocation NLP pinned at the seed's start state, plus the
    initial decision vector obtained by fitting the seed to the horizon."""
    nlp = CollocationNlp(sys, spec, costs, seed.states[0])
    z0 = nlp.initial_point(seed)
    return nlp, z0


def solve(nlp, seed, max_iter=300):
    """Solve one transcription from a seed.  Returns the knot Trajectory on
    success, None on any solver failure (reason logged at debug level)."""
    z0 = nlp.initial_point(seed) if isinstance(seed, DemoSeed) else np.asarray(seed)
    res = solve_nlp(nlp, z0, max_iter=max_iter)
    if not res.success:
        log.debug("demonstrator solve failed (%s): defect=%.2e quad_viol=%.2e",
                  res.status, res.defect_max, res.quad_viol)
        return None
    xs, us = nlp.split(res.z)
    times = nlp.h * np.arange(nlp.N + 1)
    return Trajectory(times, xs.copy(), us.copy())


def hs_defects(sys, traj):
    """Hermite-Simpson defects of a trajectory, written out directly (kept
    separate from the NLP's own constraint assembly on purpose)."""
    xs, us = traj.states, traj.inputs
    h = traj.step
    fk = sys.rhs(xs, us)
    xc = 0.5 * (xs[:-1] + xs[1:]) + (h / 8.0) * (fk[:-1] - fk[1:])
    uc = 0.5 * (us[:-1] + us[1:])
    fc = sys.rhs(xc, uc)
    return xs[1:] - xs[:-1] - (h / 6.0) * (fk[:-1] + 4.0 * fc + fk[1:])


def check_demonstration(demo, sys, spec, defect_tol=1e-6):
    """Re-verify the clearance conditions of a demonstration at every knot.

    Checks, with clearance delta: the terminal state sits in the shrunk
    goal, inputs keep their margin to the input set, every knot state keeps
    its margin to every obstacle, and the defect residuals are below
    defect_tol.  Returns (ok, report).
    """
    traj = demo.traj
    d = spec.clearance
    eps = 1e-9
    report = {}

    report["defect_max"] = float(np.abs(hs_defects(sys, traj)).max(initial=0.0)) \
        if traj.n_knots > 1 else 0.0
    report["terminal_ok"] = bool(spec.goal.value(traj.states[-1]) <= spec.goal.shrunk_level(d) + eps)
    report["inputs_ok"] = bool(np.all(spec.input_box.contains(traj.inputs, shrink=d - eps)))
    obs_ok = True
    for obs in spec.obstacles:
        if np.any(obs.value(traj.states) <= obs.inflated_alpha(d) - eps):
            obs_ok = False
            break
    report["obstacles_ok"] = obs_ok
    if traj.n_knots > 1:
        reint = rk4_step(sys, traj.states[:-1], traj.inputs[:-1], traj.step)
        report["reintegration_max"] = float(np.abs(reint - traj.states[1:]).max())
    else:
        report["reintegration_max"] = 0.0
    ok = (report["defect_max"] <= defect_tol and report["terminal_ok"]
          and report["inputs_ok"] and report["obstacles_ok"])
    return ok, report


def demo(sys, spec, costs, seed, metrics=None, max_iter=300):
    """One demonstrator call: optional Demonstration from a DemoSeed.

    The start state is pinned to the seed's first state.  On success the
    returned demonstration carries its Riccati matrices and gains and has
    passed the independent clearance re-check.
    """
    nlp, z0 = transcribe(sys, spec, costs, seed)
    res = solve_nlp(nlp, z0, max_iter=max_iter)
    outcome = None
    reason = res.status
    if res.success:
        xs, us = nlp.split(res.z)
        times = nlp.h * np.arange(nlp.N + 1)
        traj = Trajectory(times, xs.copy(), us.copy())
        try:
            S, K = riccati_backward(sys, traj, costs)
        except LossOfPositivity:
            reason = "riccati_loss_of_positivity"
            S = None
        if S is not None:
            cand = Demonstration(traj, S, K,
                                 parent_info={"source": seed.source})
            ok, report = check_demonstration(cand, sys, spec)
            if ok:
                outcome = cand
            else:
                reason = "clearance_recheck_failed"
                log.debug("demo re-check failed: %s", report)
    if metrics is not None:
        metrics.record_demo_call(outcome is not None, reason)
    if outcome is None:
        log.debug("demonstrator failed: %s (seed source %s)", reason, seed.source)
    return outcome
