"""Time-varying LQR tracking along demonstrations and demonstration assignment.

A demonstration carries its backward Riccati solution S_k and gain sequence
K_k at every knot.  The cost-to-go of a query state against a demonstration
is the minimum over knots of (x - x_k)^T S_k (x - x_k); the arg min knot is
where tracking enters.  An LqrTree is the set of demonstrations plus the
assignment rule; it caches stacked per-knot arrays so that assignment and
closed-loop simulation vectorize over batches of query states.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky

from .dynamics import Trajectory, rk4_step
from .errors import IntegrationDiverged, LossOfPositivity


@dataclass(frozen=True)
class LqrCosts:
    """Quadratic tracking costs: running Q, terminal Q0, input R (all SPD)."""

    Q: np.ndarray
    Q0: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        for name in ("Q", "Q0", "R"):
            M = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, M)
            if np.max(np.abs(M - M.T)) > 1e-12:
                raise ValueError(f"{name} must be symmetric")
            try:
                cholesky(M)
            except np.linalg.LinAlgError:
                raise ValueError(f"{name} must be positive definite") from None


@dataclass
class Demonstration:
    """A dynamics-consistent goal-reaching trajectory with its TVLQR data."""

    traj: Trajectory
    S: np.ndarray
    gains: np.ndarray
    id: Optional[int] = None
    parent_info: Optional[dict] = None

    @property
    def n_knots(self):
        return self.traj.n_knots

    @property
    def start(self):
        return self.traj.states[0]


def riccati_backward(sys, traj, costs):
    """Integrate the differential Riccati equation backward along (x, u).

    -dS/dt = A^T S + S A - S B R^{-1} B^T S + Q with S(T) = Q0, one RK4 step
    per trajectory segment; A, B at half steps come from linearizing at the
    averaged knot states/inputs.  Returns (S, K) with S[k] SPD and
    K[k] = R^{-1} B_k^T S[k].
    """
    xs, us = traj.states, traj.inputs
    N = len(xs) - 1
    h = traj.step
    Q, Q0, R = costs.Q, costs.Q0, costs.R
    Rf = cho_factor(R)

    if N > 0:
        mids_x = 0.5 * (xs[:-1] + xs[1:])
        mids_u = 0.5 * (us[:-1] + us[1:])
        A_knots, B_knots = sys.jac(xs, us)
        A_mids, B_mids = sys.jac(mids_x, mids_u)
    else:
        A_knots, B_knots = sys.jac(xs, us)

    def ric(A, B, S):
        SB = S @ B
        return A.T @ S + S @ A - SB @ cho_solve(Rf, SB.T) + Q

    S_seq = np.empty((N + 1,) + Q0.shape)
    S_seq[N] = Q0
    for k in range(N - 1, -1, -1):
        S1 = S_seq[k + 1]
        A1, B1 = A_knots[k + 1], B_knots[k + 1]
        Am, Bm = A_mids[k], B_mids[k]
        A0, B0 = A_knots[k], B_knots[k]
        k1 = ric(A1, B1, S1)
        k2 = ric(Am, Bm, S1 + 0.5 * h * k1)
        k3 = ric(Am, Bm, S1 + 0.5 * h * k2)
        k4 = ric(A0, B0, S1 + h * k3)
        S0 = S1 + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        S_seq[k] = 0.5 * (S0 + S0.T)

    K_seq = np.empty((N + 1, R.shape[0], Q.shape[0]))
    for k in range(N + 1):
        try:
            cholesky(S_seq[k])
        except np.linalg.LinAlgError:
            raise LossOfPositivity(f"Riccati matrix lost positivity at knot {k}") from None
        K_seq[k] = cho_solve(Rf, B_knots[k].T @ S_seq[k])
    return S_seq, K_seq


def _feedback(x_ref, u_ref, K, x):
    """u_ref - K (x - x_ref), batch-aware with an explicit last-axis sum."""
    e = x - x_ref
    return u_ref - np.sum(K * e[..., None, :], axis=-1)


def track(demo, k0, x, t, input_box):
    """LQR tracking input at time t after entering the demonstration at knot
    k0; past the final knot the terminal gain keeps regulating to x(T)."""
    h = demo.traj.step
    if h > 0:
        k = k0 + int(round(t / h))
    else:
        k = k0
    k = min(k, demo.n_knots - 1)
    u = _feedback(demo.traj.states[k], demo.traj.inputs[k], demo.gains[k], np.asarray(x, dtype=float))
    return input_box.clip(u)


def value(demo, x):
    """Cost-to-go of x against the demonstration: min over knots of the
    Riccati quadratic form, together with the arg min (entry) knot."""
    diff = np.asarray(x, dtype=float) - demo.traj.states
    vals = np.sum(np.sum(demo.S * diff[:, None, :], axis=-1) * diff, axis=-1)
    k = int(np.argmin(vals))
    return float(vals[k]), k


class LqrTree:
    """A set of demonstrations, their tracking controllers and the assignment
    rule; `assignment` is 'lqr' (arg min of the value function) or 'funnel'
    (arg min restricted to demos whose funnel threshold admits the state)."""

    def __init__(self, costs, assignment="lqr", narrowing=500):
        if assignment not in ("lqr", "funnel"):
            raise ValueError("assignment must be 'lqr' or 'funnel'")
        self.costs = costs
        self.assignment = assignment
        self.narrowing = int(narrowing)
        self.demos = []
        self.funnel_d = np.empty(0)
        self._cache = None

    def __len__(self):
        return len(self.demos)

    def add_demo(self, demo):
        demo.id = len(self.demos)
        self.demos.append(demo)
        self.funnel_d = np.append(self.funnel_d, np.inf)
        self._cache = None
        return demo.id

    # -- stacked caches ----------------------------------------------------

    def _ensure_cache(self):
        if self._cache is not None:
            return self._cache
        if not self.demos:
            raise ValueError("LqrTree has no demonstrations")
        lens = np.array([d.n_knots for d in self.demos])
        K = int(lens.max())
        D = len(self.demos)
        n = self.demos[0].traj.states.shape[1]
        m = self.demos[0].traj.inputs.shape[1]
        states = np.empty((D, K, n))
        inputs = np.empty((D, K, m))
        S = np.empty((D, K, n, n))
        gains = np.empty((D, K, m, n))
        for i, d in enumerate(self.demos):
            L = d.n_knots
            states[i, :L] = d.traj.states
            inputs[i, :L] = d.traj.inputs
            S[i, :L] = d.S
            gains[i, :L] = d.gains
            if L < K:  # pad with the final knot; duplicates never win arg mins
                states[i, L:] = d.traj.states[-1]
                inputs[i, L:] = d.traj.inputs[-1]
                S[i, L:] = d.S[-1]
                gains[i, L:] = d.gains[-1]
        self._cache = {"states": states, "inputs": inputs, "S": S,
                       "gains": gains, "lens": lens}
        return self._cache

    # -- assignment --------------------------------------------------------

    def value_batch(self, X, chunk=16):
        """Per-demo minimum cost-to-go and entry knots for query states X of
        shape (B, n).  Returns (V, entry) of shapes (B, D)."""
        c = self._ensure_cache()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        B, D = X.shape[0], len(self.demos)
        V = np.empty((B, D))
        entry = np.empty((B, D), dtype=np.int64)
        dist = np.empty((B, D))
        for d0 in range(0, D, chunk):
            d1 = min(d0 + chunk, D)
            diff = X[:, None, None, :] - c["states"][None, d0:d1]
            vals = np.sum(np.sum(c["S"][None, d0:d1] * diff[..., None, :], axis=-1) * diff, axis=-1)
            V[:, d0:d1] = vals.min(axis=2)
            entry[:, d0:d1] = vals.argmin(axis=2)
            dist[:, d0:d1] = np.sum(diff * diff, axis=-1).min(axis=2)
        return V, entry, dist

    def assign_batch(self, X):
        """Vectorized assignment: demo index and entry knot per query state.

        When more demonstrations exist than the narrowing count, only the
        narrowing-many Euclidean-closest demos per query compete in the value
        arg min.  Ties resolve to the smallest demo id, then smallest knot.
        """
        V, entry, dist = self.value_batch(X)
        V = self._narrow(V, dist)
        d_idx = np.argmin(V, axis=1)
        k_idx = entry[np.arange(len(d_idx)), d_idx]
        return d_idx, k_idx

    def _narrow(self, V, dist):
        D = V.shape[1]
        if D > self.narrowing:
            keep = np.argpartition(dist, self.narrowing - 1, axis=1)[:, : self.narrowing]
            mask = np.ones_like(V, dtype=bool)
            np.put_along_axis(mask, keep, False, axis=1)
            V = np.where(mask, np.inf, V)
        return V

    def assign_funnel_batch(self, X):
        """Funnel assignment (value arg min over demos with V <= d).  Entries
        with no qualifying demo get index -1."""
        V, entry, dist = self.value_batch(X)
        V = self._narrow(V, dist)
        V = np.where(V <= self.funnel_d[None, :], V, np.inf)
        d_idx = np.argmin(V, axis=1)
        none = ~np.isfinite(V[np.arange(len(d_idx)), d_idx])
        k_idx = entry[np.arange(len(d_idx)), d_idx]
        d_idx = np.where(none, -1, d_idx)
        return d_idx, k_idx


def assign(tree, x):
    """arg min over demonstrations of the cost-to-go at x."""
    d_idx, k_idx = tree.assign_batch(np.asarray(x, dtype=float)[None, :])
    return tree.demos[int(d_idx[0])], int(k_idx[0])


def assign_funnel(tree, x):
    """Funnel-restricted assignment; None when no demonstration qualifies."""
    d_idx, k_idx = tree.assign_funnel_batch(np.asarray(x, dtype=float)[None, :])
    if d_idx[0] < 0:
        return None
    return tree.demos[int(d_idx[0])], int(k_idx[0])


def shrink_funnel(tree, demo_id, x_counter, eps=1e-6):
    """Lower the demo's funnel threshold just below its value at x_counter so
    the counterexample is no longer assigned to it."""
    v, _ = value(tree.demos[demo_id], x_counter)
    tree.funnel_d[demo_id] = v * (1.0 - eps)


@dataclass
class TrackingPolicy:
    """Feedback law fixed at query time: track one demonstration from one
    entry knot for the whole rollout (the assignment is not re-evaluated)."""

    tree: LqrTree
    demo_index: int
    entry_knot: int
    via_funnel: bool = False

    def __call__(self, x, t):
        demo = self.tree.demos[self.demo_index]
        return track(demo, self.entry_knot, x, t, _UNBOUNDED)


class _UnboundedBox:
    def clip(self, u):
        return u


_UNBOUNDED = _UnboundedBox()


def tree_policy(tree, x0):
    """Pick the target demonstration for x0 (funnel rule first in funnel
    mode, falling back to the plain LQR rule) and return the tracking law."""
    via_funnel = False
    if tree.assignment == "funnel":
        picked = assign_funnel(tree, x0)
        if picked is not None:
            via_funnel = True
            demo, k0 = picked
        else:
            demo, k0 = assign(tree, x0)
    else:
        demo, k0 = assign(tree, x0)
    return TrackingPolicy(tree, demo.id, k0, via_funnel)


# ---------------------------------------------------------------------------
# batched closed-loop simulation of the tree policy


OUTCOME_GOAL = 0
OUTCOME_OBSTACLE = 1
OUTCOME_BOUNDS = 2
OUTCOME_TIMEOUT = 3
_OUTCOME_NAMES = ("goal", "obstacle", "bounds", "timeout")


def simulate_tracked(sys, spec, tree, X0, margin=0.0, demo_idx=None, entry=None,
                     record=True, run_past_goal=False, check=None):
    """Simulate the LQR-tree feedback law from a batch of initial states.

    Per-sample semantics are identical to dynamics.simulate with the policy
    from tree_policy: at each knot the goal test runs first, then the
    obstacle and bound tests with clearance delta*(1-margin); then one RK4
    step under the clamped tracking input.  Returns (codes, knots, states,
    inputs, demo_idx, entry): codes/knots are (B,) arrays, states/inputs are
    (B, n_knots, .) rollouts (None when record=False).

    run_past_goal keeps integrating goal-reaching samples to the horizon
    (the outcome stays the first goal entry); their recorded rollout is then
    a dynamics-consistent full-length trajectory for seeding.  `check`
    overrides the constraint tests and input clamp (default: the policy
    check set at the given margin).
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    B = X0.shape[0]
    if demo_idx is None:
        if tree.assignment == "funnel":
            demo_idx, entry = tree.assign_funnel_batch(X0)
            fallback = demo_idx < 0
            if np.any(fallback):
                d2, k2 = tree.assign_batch(X0[fallback])
                demo_idx = demo_idx.copy()
                entry = entry.copy()
                demo_idx[fallback] = d2
                entry[fallback] = k2
        else:
            demo_idx, entry = tree.assign_batch(X0)
    demo_idx = np.asarray(demo_idx, dtype=np.int64)
    entry = np.asarray(entry, dtype=np.int64)

    c = tree._ensure_cache()
    lens = c["lens"]
    if check is None:
        check = spec.policy_check_set(margin)
    h = spec.step
    n_steps = spec.n_steps

    codes = np.full(B, -1, dtype=np.int64)
    knots = np.zeros(B, dtype=np.int64)
    if record:
        states = np.empty((B, n_steps + 1, sys.state_dim))
        inputs = np.zeros((B, n_steps + 1, sys.input_dim))
        states[:, 0] = X0
    else:
        states = inputs = None

    x = X0.copy()
    for k in range(n_steps + 1):
        undecided = codes < 0
        in_goal = spec.goal.contains(x)
        hit = undecided & in_goal
        codes[hit] = OUTCOME_GOAL
        knots[hit] = k
        undecided &= ~in_goal
        obs_bad = ~check.obstacle_free(x)
        hit = undecided & obs_bad
        codes[hit] = OUTCOME_OBSTACLE
        knots[hit] = k
        undecided &= ~obs_bad
        bounds_bad = ~check.bounds_ok(x)
        hit = undecided & bounds_bad
        codes[hit] = OUTCOME_BOUNDS
        knots[hit] = k
        undecided &= ~bounds_bad
        if k == n_steps:
            codes[undecided] = OUTCOME_TIMEOUT
            knots[undecided] = k
            break
        stepping = codes < 0
        if run_past_goal:
            stepping = stepping | (codes == OUTCOME_GOAL)
        if not np.any(stepping):
            break
        kk = np.minimum(entry + k, lens[demo_idx] - 1)
        u = _feedback(c["states"][demo_idx, kk], c["inputs"][demo_idx, kk],
                      c["gains"][demo_idx, kk], x)
        u = check.input_clip.clip(u)
        x_new = rk4_step(sys, x, u, h)
        if not np.all(np.isfinite(x_new[stepping])):
            raise IntegrationDiverged("tracked simulation diverged")
        x = np.where(stepping[:, None], x_new, x)
        if record:
            inputs[:, k] = np.where(stepping[:, None], u, 0.0)
            states[:, k + 1] = x
    return codes, knots, states, inputs, demo_idx, entry


def tracked_trajectory(spec, states, inputs, code, knot, b=0):
    """Extract one sample's Trajectory (cut at its event knot) from the
    recorded arrays of simulate_tracked."""
    k_end = int(knot)
    times = spec.step * np.arange(k_end + 1)
    return Trajectory(times, states[b, : k_end + 1], inputs[b, : k_end + 1])


def outcome_name(code):
    return _OUTCOME_NAMES[int(code)]
