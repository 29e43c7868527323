"""Control systems, constraint sets, RK4 simulation and the benchmark problems.

States and inputs are float64 numpy arrays.  Every right-hand side and
jacobian here is batch-aware: an input of shape (..., n) produces an output
of shape (..., n) / (..., n, n).  Reductions are written as elementwise
products followed by sums over the last axis so that a batch of one is
bit-identical to the same state inside a larger batch.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import IntegrationDiverged


# ---------------------------------------------------------------------------
# basic geometry


def _quad_form(M, v):
    """v^T M v over the last axis of v, batch-aware."""
    return np.sum(np.sum(M * v[..., None, :], axis=-1) * v, axis=-1)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi] (componentwise).  Zero-width coordinates are
    allowed and mark dimensions that are fixed to a constant."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if np.any(self.hi < self.lo):
            raise ValueError("box has hi < lo")

    @property
    def dim(self):
        return self.lo.shape[0]

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def contains(self, x, shrink=0.0):
        """Componentwise membership of x in the box shrunk by `shrink`."""
        x = np.asarray(x)
        ok_lo = x >= self.lo + shrink
        ok_hi = x <= self.hi - shrink
        return np.all(ok_lo & ok_hi, axis=-1)

    def clip(self, x):
        return np.clip(x, self.lo, self.hi)

    def sample(self, rng):
        return self.lo + (self.hi - self.lo) * rng.random(self.dim)

    def free_dims(self):
        """Indices of coordinates with nonzero width."""
        return np.flatnonzero(self.hi > self.lo)

    def subset_of(self, other, slack=1e-12):
        return bool(np.all(self.lo >= other.lo - slack) and np.all(self.hi <= other.hi + slack))


@dataclass(frozen=True)
class Obstacle:
    """Cylinder over a 2-D ellipse {y | (y-a)^T A (y-a) <= alpha} on a named
    coordinate pair, with an optional inflated level used for demonstrations.
    Membership is an exact quadric test."""

    coords: tuple
    a: np.ndarray
    A: np.ndarray
    alpha: float
    alpha_demo: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        if self.A.shape != (2, 2) or self.a.shape != (2,):
            raise ValueError("obstacle base must be a 2-D ellipse")
        if not np.allclose(self.A, self.A.T, atol=1e-12):
            raise ValueError("obstacle metric must be symmetric")
        evals = np.linalg.eigvalsh(self.A)
        if np.any(evals <= 0):
            raise ValueError("obstacle metric must be positive definite")
        object.__setattr__(self, "lam_max", float(evals[-1]))

    def inflated_alpha(self, clearance):
        """Quadric level whose sublevel set contains the Euclidean
        `clearance`-neighbourhood of the base ellipse.  Conservative: the
        inflation is sized along the minor axis (largest eigenvalue)."""
        if clearance <= 0.0:
            return self.alpha
        return (np.sqrt(self.alpha) + clearance * np.sqrt(self.lam_max)) ** 2

    def value(self, x):
        """Quadric value (y-a)^T A (y-a) at the obstacle's coordinate pair."""
        y = np.stack([np.asarray(x)[..., self.coords[0]],
                      np.asarray(x)[..., self.coords[1]]], axis=-1) - self.a
        return _quad_form(self.A, y)

    def contains(self, x, clearance=0.0):
        return self.value(x) <= self.inflated_alpha(clearance)


@dataclass(frozen=True)
class Goal:
    """Quadratic sublevel goal set {x | x^T M x < c} around a goal state
    (a norm ball is M = I, c = radius^2)."""

    M: np.ndarray
    c: float
    center: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "M", np.asarray(self.M, dtype=float))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        evals = np.linalg.eigvalsh(self.M)
        if np.any(evals <= 0):
            raise ValueError("goal metric must be positive definite")
        object.__setattr__(self, "lam_max", float(evals[-1]))

    def value(self, x):
        return _quad_form(self.M, np.asarray(x) - self.center)

    def contains(self, x):
        return self.value(x) < self.c

    def shrunk_level(self, clearance):
        """Level c' such that a Euclidean `clearance`-ball around any point of
        {x^T M x <= c'} stays inside the goal."""
        if clearance <= 0.0:
            return self.c
        root = np.sqrt(self.c) - clearance * np.sqrt(self.lam_max)
        if root <= 0.0:
            raise ValueError("clearance larger than the goal set")
        return root ** 2


# ---------------------------------------------------------------------------
# control systems


@dataclass(frozen=True)
class ControlSystem:
    """Smooth control system xdot = F(x, u) with optional analytic jacobians.

    rhs maps ((..., n), (..., m)) -> (..., n); jacobians, when given, map the
    same arguments to (A, B) of shapes (..., n, n) and (..., n, m).
    """

    name: str
    state_dim: int
    input_dim: int
    rhs: Callable
    jacobians: Optional[Callable] = None

    def jac(self, x, u):
        if self.jacobians is not None:
            return self.jacobians(x, u)
        return finite_difference_jacobians(self.rhs, x, u)


def finite_difference_jacobians(rhs, x, u, step=1e-6):
    """Central-difference jacobians of rhs at a single (x, u)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    n, m = x.shape[-1], u.shape[-1]
    A = np.empty(x.shape + (n,))
    B = np.empty(x.shape + (m,))
    for i in range(n):
        dx = np.zeros(n)
        dx[i] = step
        A[..., i] = (rhs(x + dx, u) - rhs(x - dx, u)) / (2 * step)
    for j in range(m):
        du = np.zeros(m)
        du[j] = step
        B[..., j] = (rhs(x, u + du) - rhs(x, u - du)) / (2 * step)
    return A, B


def rk4_step(sys, x, u, dt):
    """One classical Runge-Kutta step under constant input, batch-aware."""
    k1 = sys.rhs(x, u)
    k2 = sys.rhs(x + 0.5 * dt * k1, u)
    k3 = sys.rhs(x + 0.5 * dt * k2, u)
    k4 = sys.rhs(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_step(sys, x, u, dt):
    """rk4_step plus divergence check (the library's only integrator)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = rk4_step(sys, np.asarray(x, dtype=float), np.asarray(u, dtype=float), dt)
    if not np.all(np.isfinite(out)):
        raise IntegrationDiverged(f"non-finite state after step of {sys.name}")
    return out


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class Trajectory:
    """Time-sampled trajectory: uniform times, one state and one input per
    knot (the input at knot k is the one applied over [t_k, t_{k+1}])."""

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "states", np.asarray(self.states, dtype=float))
        object.__setattr__(self, "inputs", np.asarray(self.inputs, dtype=float))
        if not (len(self.times) == len(self.states) == len(self.inputs)):
            raise ValueError("times, states and inputs must have equal length")
        if len(self.times) > 1:
            steps = np.diff(self.times)
            span = self.times[-1] - self.times[0]
            if np.max(np.abs(steps - steps[0])) > 1e-12 * max(span, 1.0):
                raise ValueError("trajectory knots must be uniformly spaced")

    @property
    def n_knots(self):
        return len(self.times)

    @property
    def step(self):
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0


# ---------------------------------------------------------------------------
# problem specification


@dataclass(frozen=True)
class ProblemSpec:
    """Everything that defines one synthesis problem besides the dynamics.

    The primed (demo_*) sets restrict demonstrations only; simulations are
    checked against the plain sets, shrunk/inflated by the clearance.
    `initial_box` may have zero-width coordinates (fixed to a constant).
    """

    name: str
    initial_box: Box
    obstacles: tuple
    goal: Goal
    input_box: Box
    state_box: Box
    demo_state_box: Box
    demo_input_box: Box
    clearance: float
    horizon: float
    step: float
    x_goal: np.ndarray
    u_goal: np.ndarray
    actions: np.ndarray
    metric_weights: np.ndarray
    history_bias: bool = False
    sampling_inflation: float = 0.0
    sample_avoid_obstacles: bool = False
    extra_initial_boxes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "x_goal", np.asarray(self.x_goal, dtype=float))
        object.__setattr__(self, "u_goal", np.asarray(self.u_goal, dtype=float))
        object.__setattr__(self, "actions", np.asarray(self.actions, dtype=float))
        object.__setattr__(self, "metric_weights", np.asarray(self.metric_weights, dtype=float))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.clearance <= 0:
            raise ValueError("clearance must be positive")
        if not self.demo_input_box.subset_of(self.input_box):
            raise ValueError("demo input set must be contained in the input set")
        if not self.demo_state_box.subset_of(self.state_box):
            raise ValueError("demo state bounds must be contained in the state bounds")

    @property
    def n_steps(self):
        return int(round(self.horizon / self.step))

    @property
    def n_knots(self):
        return self.n_steps + 1

    def sampling_box(self):
        """Open sampling box W ⊇ I (the initial box, optionally inflated)."""
        if self.sampling_inflation == 0.0:
            return self.initial_box
        half = 0.5 * (self.initial_box.hi - self.initial_box.lo)
        pad = self.sampling_inflation * half
        return Box(self.initial_box.lo - pad, self.initial_box.hi + pad)

    def obstacle_free(self, x, clearance=0.0):
        """True where x avoids every obstacle inflated by `clearance`."""
        x = np.asarray(x)
        ok = np.ones(x.shape[:-1], dtype=bool)
        for obs in self.obstacles:
            ok &= ~obs.contains(x, clearance)
        return ok

    def state_ok(self, x, clearance=0.0):
        """Bounds and obstacle test together, applied at simulation knots."""
        return self.state_box.contains(x, shrink=clearance) & self.obstacle_free(x, clearance)

    def policy_check_set(self, margin=0.0):
        """Constraint tests of the plain policy simulation: state bounds
        shrunk and obstacles inflated by clearance*(1-margin), inputs
        clamped to the full input set."""
        c = self.clearance * (1.0 - margin)
        return ConstraintSet(
            state_box=Box(self.state_box.lo + c, self.state_box.hi - c),
            obstacle_levels=tuple((o, o.inflated_alpha(c)) for o in self.obstacles),
            input_clip=self.input_box,
        )

    def demo_check_set(self, margin=0.0):
        """Constraint tests for 'successful with a clearance': the
        demonstration-restricted sets relaxed by the margin fraction of
        their gap to the plain sets, with inputs clamped to the demo input
        box.  A rollout passing this test is (up to the margin) feasible as
        a demonstrator seed."""
        lo = self.demo_state_box.lo - margin * (self.demo_state_box.lo - self.state_box.lo)
        hi = self.demo_state_box.hi + margin * (self.state_box.hi - self.demo_state_box.hi)
        levels = []
        for o in self.obstacles:
            a_demo = o.alpha_demo if o.alpha_demo is not None else o.inflated_alpha(self.clearance)
            levels.append((o, a_demo - margin * (a_demo - o.alpha)))
        return ConstraintSet(state_box=Box(lo, hi),
                             obstacle_levels=tuple(levels),
                             input_clip=self.demo_input_box)


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class ConstraintSet:
    """Constraint tests applied at simulation knots plus the input clamp."""

    state_box: Box
    obstacle_levels: tuple
    input_clip: Box

    def obstacle_free(self, x):
        ok = np.ones(np.asarray(x).shape[:-1], dtype=bool)
        for obs, level in self.obstacle_levels:
            ok &= obs.value(x) > level
        return ok

    def bounds_ok(self, x):
        return self.state_box.contains(x)


@dataclass(frozen=True)
class SimOutcome:
    """Result of one closed-loop simulation.  kind is one of 'goal',
    'obstacle', 'bounds', 'timeout'; knot is the knot index of the event."""

    kind: str
    knot: int

    @property
    def reached_goal(self):
        return self.kind == "goal"


def simulate(sys, policy, x0, spec, margin=0.0):
    """Closed-loop simulation of `policy(x, t)` from x0 up to the horizon.

    Constraint tests at every knot use the clearance delta*(1-margin):
    obstacles are inflated and state bounds shrunk by that amount; goal
    membership is plain.  Inputs are clamped to the input set before
    integration.  Returns (Trajectory, SimOutcome).
    """
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    if not 0.0 <= margin < 1.0:
        raise ValueError("margin must lie in [0, 1)")
    check = spec.policy_check_set(margin)
    h = spec.step
    n_steps = spec.n_steps

    states = np.empty((n_steps + 1, sys.state_dim))
    inputs = np.zeros((n_steps + 1, sys.input_dim))
    states[0] = x0

    x = x0
    outcome = None
    k_end = n_steps
    for k in range(n_steps + 1):
        if spec.goal.contains(x):
            outcome = SimOutcome("goal", k)
            k_end = k
            break
        if not check.obstacle_free(x):
            outcome = SimOutcome("obstacle", k)
            k_end = k
            break
        if not check.bounds_ok(x):
            outcome = SimOutcome("bounds", k)
            k_end = k
            break
        if k == n_steps:
            break
        u = check.input_clip.clip(np.asarray(policy(x, k * h), dtype=float))
        inputs[k] = u
        x = integrate_step(sys, x, u, h)
        states[k + 1] = x

    if outcome is None:
        outcome = SimOutcome("timeout", n_steps)
    times = h * np.arange(k_end + 1)
    return Trajectory(times, states[: k_end + 1], inputs[: k_end + 1]), outcome


# ---------------------------------------------------------------------------
# benchmark: inverted pendulum


PENDULUM_M = 0.5
PENDULUM_L = 1.0
PENDULUM_B = 0.1
PENDULUM_G = 9.81


def _pendulum_rhs(x, u):
    th, om = x[..., 0], x[..., 1]
    inv_ml2 = 1.0 / (PENDULUM_M * PENDULUM_L ** 2)
    alpha = inv_ml2 * (u[..., 0] + PENDULUM_M * PENDULUM_G * PENDULUM_L * np.sin(th)
                       - PENDULUM_B * om)
    return np.stack([om, alpha], axis=-1)


def _pendulum_jac(x, u):
    th = x[..., 0]
    inv_ml2 = 1.0 / (PENDULUM_M * PENDULUM_L ** 2)
    z = np.zeros_like(th)
    o = np.ones_like(th)
    A = np.stack([
        np.stack([z, o], axis=-1),
        np.stack([inv_ml2 * PENDULUM_M * PENDULUM_G * PENDULUM_L * np.cos(th),
                  -inv_ml2 * PENDULUM_B * o], axis=-1),
    ], axis=-2)
    B = np.stack([
        np.stack([z], axis=-1),
        np.stack([inv_ml2 * o], axis=-1),
    ], axis=-2)
    return A, B


def benchmark_pendulum():
    """Torque-limited inverted pendulum swing-up (2 states, 1 input)."""
    sys = ControlSystem("pendulum", 2, 1, _pendulum_rhs, _pendulum_jac)
    spec = ProblemSpec(
        name="pendulum",
        initial_box=Box([-4.0, -5.0], [4.0, 5.0]),
        obstacles=(),
        goal=Goal(np.eye(2), 0.1 ** 2, np.zeros(2)),
        input_box=Box([-1.25], [1.25]),
        state_box=Box([-10.0, -15.0], [10.0, 15.0]),
        demo_state_box=Box([-8.0, -12.0], [8.0, 12.0]),
        demo_input_box=Box([-1.0], [1.0]),
        clearance=0.05,
        horizon=10.0,
        step=0.05,
        x_goal=np.zeros(2),
        u_goal=np.zeros(1),
        actions=np.array([[-1.0], [1.0]]),
        metric_weights=np.ones(2),
        history_bias=False,
    )
    return sys, spec


# ---------------------------------------------------------------------------
# benchmark: inverted pendulum on a cart
#
# Frictionless cart-pole with a point-mass pole, theta measured from the
# upright position; standard textbook equations of motion derived from the
# Lagrangian.  Masses/length are not fixed by the benchmark source, so the
# common values (cart 1.0 kg, pole 0.1 kg, length 0.5 m) are used.


CARTPOLE_MC = 1.0
CARTPOLE_MP = 0.1
CARTPOLE_L = 0.5
CARTPOLE_G = 9.81


def _cartpole_rhs(x, u):
    th, xd, thd = x[..., 1], x[..., 2], x[..., 3]
    f = u[..., 0]
    s, c = np.sin(th), np.cos(th)
    mc, mp, l, g = CARTPOLE_MC, CARTPOLE_MP, CARTPOLE_L, CARTPOLE_G
    den = mc + mp * s ** 2
    xacc = (f + mp * s * (l * thd ** 2 - g * c)) / den
    thacc = ((mc + mp) * g * s - c * (f + mp * l * thd ** 2 * s)) / (l * den)
    return np.stack([xd, thd, xacc, thacc], axis=-1)


def _cartpole_jac(x, u):
    th, thd = x[..., 1], x[..., 3]
    f = u[..., 0]
    s, c = np.sin(th), np.cos(th)
    mc, mp, l, g = CARTPOLE_MC, CARTPOLE_MP, CARTPOLE_L, CARTPOLE_G
    den = mc + mp * s ** 2
    dden = 2.0 * mp * s * c

    num_x = f + mp * s * (l * thd ** 2 - g * c)
    dnum_x_th = mp * c * (l * thd ** 2 - g * c) + mp * s * g * s
    dxacc_th = (dnum_x_th * den - num_x * dden) / den ** 2
    dxacc_thd = 2.0 * mp * s * l * thd / den
    dxacc_f = 1.0 / den

    num_t = (mc + mp) * g * s - c * (f + mp * l * thd ** 2 * s)
    dnum_t_th = (mc + mp) * g * c + s * (f + mp * l * thd ** 2 * s) - c * mp * l * thd ** 2 * c
    dthacc_th = (dnum_t_th * (l * den) - num_t * l * dden) / (l * den) ** 2
    dthacc_thd = -2.0 * c * mp * l * thd * s / (l * den)
    dthacc_f = -c / (l * den)

    z = np.zeros_like(th)
    o = np.ones_like(th)
    A = np.stack([
        np.stack([z, z, o, z], axis=-1),
        np.stack([z, z, z, o], axis=-1),
        np.stack([z, dxacc_th, z, dxacc_thd], axis=-1),
        np.stack([z, dthacc_th, z, dthacc_thd], axis=-1),
    ], axis=-2)
    B = np.stack([
        np.stack([z], axis=-1),
        np.stack([z], axis=-1),
        np.stack([dxacc_f], axis=-1),
        np.stack([dthacc_f], axis=-1),
    ], axis=-2)
    return A, B


def benchmark_cartpole():
    """Cart-pole swing-up on a short track (4 states [x, th, xd, thd])."""
    sys = ControlSystem("cartpole", 4, 1, _cartpole_rhs, _cartpole_jac)
    xb = np.array([0.45, 4.0 * np.pi, 15.0, 50.0])
    xbp = np.array([0.36, 2.0 * np.pi, 8.0, 25.0])
    spec = ProblemSpec(
        name="cartpole",
        initial_box=Box([-0.2, -np.pi, -1.5, -8.0], [0.2, np.pi, 1.5, 8.0]),
        obstacles=(),
        goal=Goal(np.diag([10.0, 1.0, 1.0, 1.0]), 0.05, np.zeros(4)),
        input_box=Box([-60.0], [60.0]),
        state_box=Box(-xb, xb),
        demo_state_box=Box(-xbp, xbp),
        demo_input_box=Box([-36.0], [36.0]),
        clearance=0.03,
        horizon=7.5,
        step=0.025,
        x_goal=np.zeros(4),
        u_goal=np.zeros(1),
        actions=np.array([[-36.0], [36.0]]),
        metric_weights=np.ones(4),
        history_bias=True,
    )
    return sys, spec


# ---------------------------------------------------------------------------
# benchmark: quadrotor
#
# Simplified rigid-body quadrotor: Euler-angle kinematics with the angular
# accelerations commanded directly and the mass-normalized thrust measured
# as a deviation from hover, so the all-zero state with zero input hovers.
# State order [x, y, z, phi, psi, th, xd, yd, zd, phid, psid, thd]; inputs
# [thrust deviation, roll acc, yaw acc, pitch acc].


QUAD_G = 9.8


def _quad_rhs(x, u):
    phi, psi, th = x[..., 3], x[..., 4], x[..., 5]
    ft = QUAD_G + u[..., 0]
    sph, cph = np.sin(phi), np.cos(phi)
    sps, cps = np.sin(psi), np.cos(psi)
    sth, cth = np.sin(th), np.cos(th)
    xacc = ft * (cph * sth * cps + sph * sps)
    yacc = ft * (cph * sth * sps - sph * cps)
    zacc = ft * cph * cth - QUAD_G
    return np.concatenate([
        x[..., 6:12],
        np.stack([xacc, yacc, zacc, u[..., 1], u[..., 2], u[..., 3]], axis=-1),
    ], axis=-1)


def _quad_jac(x, u):
    phi, psi, th = x[..., 3], x[..., 4], x[..., 5]
    ft = QUAD_G + u[..., 0]
    sph, cph = np.sin(phi), np.cos(phi)
    sps, cps = np.sin(psi), np.cos(psi)
    sth, cth = np.sin(th), np.cos(th)

    shape = phi.shape
    A = np.zeros(shape + (12, 12))
    B = np.zeros(shape + (12, 4))
    idx = np.arange(6)
    A[..., idx, idx + 6] = 1.0

    gx = cph * sth * cps + sph * sps
    gy = cph * sth * sps - sph * cps
    gz = cph * cth
    A[..., 6, 3] = ft * (-sph * sth * cps + cph * sps)
    A[..., 6, 4] = ft * (-cph * sth * sps + sph * cps)
    A[..., 6, 5] = ft * (cph * cth * cps)
    A[..., 7, 3] = ft * (-sph * sth * sps - cph * cps)
    A[..., 7, 4] = ft * (cph * sth * cps + sph * sps)
    A[..., 7, 5] = ft * (cph * cth * sps)
    A[..., 8, 3] = ft * (-sph * cth)
    A[..., 8, 5] = ft * (-cph * sth)

    B[..., 6, 0] = gx
    B[..., 7, 0] = gy
    B[..., 8, 0] = gz
    B[..., 9, 1] = 1.0
    B[..., 10, 2] = 1.0
    B[..., 11, 3] = 1.0
    return A, B


def _quad_actions():
    vals = np.array([-2.0, 2.0])
    grid = np.stack(np.meshgrid(vals, vals, vals, vals, indexing="ij"), axis=-1)
    return grid.reshape(-1, 4)


def benchmark_quadrotor(variant=1):
    """Quadrotor flight to hover through three elliptic cylinder obstacles.

    variant 1 starts from the rectangle [4,7]x[-2,2] in (x, y); variant 2
    from [-4,8]x[-7,7] with obstacle-overlapping samples rejected.  All
    other state coordinates start at zero.
    """
    if variant not in (1, 2):
        raise ValueError("variant must be 1 or 2")
    sys = ControlSystem("quadrotor", 12, 4, _quad_rhs, _quad_jac)
    obstacles = (
        Obstacle((0, 1), [2.0, -3.5], np.diag([1.0, 45.0]), 8.0, 16.0),
        Obstacle((0, 1), [2.0, 3.5], np.diag([1.0, 45.0]), 8.0, 16.0),
        Obstacle((0, 1), [2.0, 0.0], np.diag([25.0, 1.0]), 7.0, 16.8),
    )
    xb_lo = np.array([-8.0, -12.0, -5.0, -1.0, -4.0 * np.pi, -1.0] + [-10.0] * 6)
    xb_hi = np.array([12.0, 12.0, 5.0, 1.0, 4.0 * np.pi, 1.0] + [10.0] * 6)
    xbp_lo = np.array([-5.0, -9.0, -0.5, -0.5, -2.0 * np.pi, -0.5,
                       -5.0, -5.0, -5.0, -2.0, -2.0, -2.0])
    xbp_hi = -xbp_lo.copy()
    xbp_hi[0] = 9.0
    xbp_lo_adj = xbp_lo.copy()
    box1 = (np.array([4.0, -2.0]), np.array([7.0, 2.0]))
    box2 = (np.array([-4.0, -7.0]), np.array([8.0, 7.0]))
    xy_lo, xy_hi = box1 if variant == 1 else box2
    init_lo = np.zeros(12)
    init_hi = np.zeros(12)
    init_lo[:2] = xy_lo
    init_hi[:2] = xy_hi
    extra_lo = np.zeros(12)
    extra_hi = np.zeros(12)
    other = box2 if variant == 1 else box1
    extra_lo[:2], extra_hi[:2] = other
    spec = ProblemSpec(
        name=f"quadrotor{variant}",
        initial_box=Box(init_lo, init_hi),
        obstacles=obstacles,
        goal=Goal(np.eye(12), 0.05 ** 2, np.zeros(12)),
        input_box=Box(-2.5 * np.ones(4), 2.5 * np.ones(4)),
        state_box=Box(xb_lo, xb_hi),
        demo_state_box=Box(xbp_lo_adj, xbp_hi),
        demo_input_box=Box(-2.0 * np.ones(4), 2.0 * np.ones(4)),
        clearance=0.02,
        horizon=10.0,
        step=0.1,
        x_goal=np.zeros(12),
        u_goal=np.zeros(4),
        actions=_quad_actions(),
        metric_weights=np.array([5.0, 5.0] + [1.0] * 10),
        history_bias=True,
        sample_avoid_obstacles=(variant == 2),
        extra_initial_boxes=(Box(extra_lo, extra_hi),),
    )
    return sys, spec


BENCHMARKS = {
    "pendulum": benchmark_pendulum,
    "cartpole": benchmark_cartpole,
    "quadrotor1": lambda: benchmark_quadrotor(1),
    "quadrotor2": lambda: benchmark_quadrotor(2),
}
