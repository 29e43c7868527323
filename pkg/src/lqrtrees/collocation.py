"""Hermite-Simpson direct collocation transcription.

Decision vector layout is interleaved per knot, z = [x_0, u_0, ..., x_N, u_N],
which keeps the KKT systems of the SQP solver banded.  Midpoint inputs use
the compressed form u_c = (u_k + u_{k+1})/2.  The objective is the quadratic
regulation cost integral of (x-xg)^T Q (x-xg) + u^T R u, discretized with
Simpson weights per segment (midpoint values taken at the knot averages, so
the objective stays quadratic with a block-tridiagonal Hessian), plus the
terminal term (x_N-xg)^T Q0 (x_N-xg).  A plain knot-sum quadrature biases
the endpoint inputs of the compressed transcription by a factor ~2, which
is why the Simpson weights are used.

Constraints:
  equalities   x_0 = x_start and one Hermite-Simpson defect per segment;
  variable box demo state/input bounds intersected with the clearance-
               tightened plain bounds (knot-0 states stay free: the start is
               pinned by the equality and may lie outside the demo box);
  quadratic    obstacle avoidance at knots 1..N against the demo-inflated
               levels, and terminal membership in the clearance-shrunk goal.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SeedDimensionMismatch


@dataclass(frozen=True)
class DemoSeed:
    """Initializer trajectory for the demonstrator: time-uniform states and
    inputs plus a tag recording where it came from."""

    states: np.ndarray
    inputs: np.ndarray
    source: str = "unspecified"

    def __post_init__(self):
        object.__setattr__(self, "states", np.atleast_2d(np.asarray(self.states, dtype=float)))
        object.__setattr__(self, "inputs", np.atleast_2d(np.asarray(self.inputs, dtype=float)))
        if len(self.states) != len(self.inputs):
            raise SeedDimensionMismatch("seed states and inputs differ in length")

    def __len__(self):
        return len(self.states)


def fit_seed_to_horizon(seed, spec):
    """Resample a seed onto the problem's N+1 knots.  Seeds that are too
    long are cut at their first goal entry past the horizon (keeping the
    head), or hard-truncated; short seeds are padded by holding the final
    state with the goal-equilibrium input."""
    K = spec.n_knots
    xs, us = seed.states, seed.inputs
    if len(xs) > K:
        in_goal = spec.goal.contains(xs)
        if np.any(in_goal):
            first = int(np.argmax(in_goal))
            if first + 1 >= K:
                xs, us = xs[: first + 1], us[: first + 1]
        xs, us = xs[:K], us[:K]
    if len(xs) < K:
        pad = K - len(xs)
        xs = np.vstack([xs, np.repeat(xs[-1:], pad, axis=0)])
        us = np.vstack([us, np.repeat(spec.u_goal[None, :], pad, axis=0)])
    return DemoSeed(xs, us, seed.source)


class CollocationNlp:
    """One transcription instance; exposes objective, equality constraints
    with their jacobian blocks, and the few quadratic inequality rows."""

    def __init__(self, sys, spec, costs, x_start):
        self.sys = sys
        self.spec = spec
        self.costs = costs
        self.x_start = np.asarray(x_start, dtype=float)
        if self.x_start.shape != (sys.state_dim,):
            raise SeedDimensionMismatch("start state has wrong dimension")
        self.n = sys.state_dim
        self.m = sys.input_dim
        self.N = spec.n_steps
        self.h = spec.step
        self.w = self.n + self.m
        self.nz = (self.N + 1) * self.w
        self.n_eq = self.n * (self.N + 1)

        self._build_bounds()
        self._build_objective()
        self._build_quad_rows()

    # -- problem data -------------------------------------------------------

    def _build_bounds(self):
        n, m, N, w = self.n, self.m, self.N, self.w
        spec = self.spec
        d = spec.clearance
        x_lo = np.maximum(spec.demo_state_box.lo, spec.state_box.lo + d)
        x_hi = np.minimum(spec.demo_state_box.hi, spec.state_box.hi - d)
        u_lo = np.maximum(spec.demo_input_box.lo, spec.input_box.lo + d)
        u_hi = np.minimum(spec.demo_input_box.hi, spec.input_box.hi - d)
        lb = np.empty((N + 1, w))
        ub = np.empty((N + 1, w))
        lb[:, :n] = x_lo
        ub[:, :n] = x_hi
        lb[:, n:] = u_lo
        ub[:, n:] = u_hi
        lb[0, :n] = -np.inf
        ub[0, :n] = np.inf
        self.lb = lb.ravel()
        self.ub = ub.ravel()

    def _build_objective(self):
        """Simpson-weight quadrature of the quadratic running cost.

        Per segment: (h/6)[l_k + 4 l_mid + l_{k+1}] with l_mid evaluated at
        the knot averages, so the Hessian has per-knot diagonal blocks plus
        one coupling block between consecutive knots.
        """
        n, m, N, w, h = self.n, self.m, self.N, self.w, self.h
        Q, Q0, R = self.costs.Q, self.costs.Q0, self.costs.R
        xg = self.spec.x_goal
        Hd = np.zeros((N + 1, w, w))       # diagonal blocks
        Ho = np.zeros((max(N, 1), w, w))   # block k couples z_k -> z_{k+1}
        g = np.zeros((N + 1, w))
        const = 0.0
        # endpoint terms: weight h/6 at each end of each segment
        we = 2.0 * (h / 6.0)
        Hd[:N, :n, :n] += we * Q
        Hd[1:, :n, :n] += we * Q
        Hd[:N, n:, n:] += we * R
        Hd[1:, n:, n:] += we * R
        g[:N, :n] += -we * (Q @ xg)
        g[1:, :n] += -we * (Q @ xg)
        const += 2 * N * (h / 6.0) * float(xg @ Q @ xg)
        # midpoint terms: weight 4h/6 at the knot averages
        wm = 2.0 * (4.0 * h / 6.0)
        if N >= 1:
            Hd[:N, :n, :n] += 0.25 * wm * Q
            Hd[1:, :n, :n] += 0.25 * wm * Q
            Ho[:N, :n, :n] += 0.25 * wm * Q
            Hd[:N, n:, n:] += 0.25 * wm * R
            Hd[1:, n:, n:] += 0.25 * wm * R
            Ho[:N, n:, n:] += 0.25 * wm * R
            g[:N, :n] += -0.5 * wm * (Q @ xg)
            g[1:, :n] += -0.5 * wm * (Q @ xg)
            const += N * (4.0 * h / 6.0) * float(xg @ Q @ xg)
        # terminal cost
        Hd[N, :n, :n] += 2.0 * Q0
        g[N, :n] += -2.0 * (Q0 @ xg)
        const += float(xg @ Q0 @ xg)
        self.H_blocks = Hd
        self.H_off = Ho
        self.g_lin = g.ravel()
        self.f_const = const

    def _build_quad_rows(self):
        """Static data of the quadratic inequality rows: (knot, coords, A,
        center, level) for obstacles; terminal goal handled alongside."""
        spec = self.spec
        rows = []
        for obs in spec.obstacles:
            level = obs.alpha_demo if obs.alpha_demo is not None \
                else obs.inflated_alpha(spec.clearance)
            for k in range(1, self.N + 1):
                rows.append(("obs", k, obs, float(level)))
        rows.append(("goal", self.N, None, float(spec.goal.shrunk_level(spec.clearance))))
        self.quad_rows = rows
        self.n_quad = len(rows)

    # -- evaluation ---------------------------------------------------------

    def split(self, z):
        zz = z.reshape(self.N + 1, self.w)
        return zz[:, : self.n], zz[:, self.n :]

    def initial_point(self, seed):
        seed = fit_seed_to_horizon(seed, self.spec)
        if seed.states.shape[1] != self.n or seed.inputs.shape[1] != self.m:
            raise SeedDimensionMismatch("seed dimensions do not match the system")
        z = np.empty((self.N + 1, self.w))
        z[:, : self.n] = seed.states
        z[:, self.n :] = seed.inputs
        z = z.ravel()
        return np.clip(z, self.lb, self.ub)

    def hess_vec(self, z):
        """H z for the block-tridiagonal objective Hessian."""
        zz = z.reshape(self.N + 1, self.w)
        Hz = np.einsum("kij,kj->ki", self.H_blocks, zz)
        if self.N >= 1:
            Hz[:-1] += np.einsum("kij,kj->ki", self.H_off, zz[1:])
            Hz[1:] += np.einsum("kij,ki->kj", self.H_off, zz[:-1])
        return Hz.ravel()

    def objective(self, z):
        Hz = self.hess_vec(z)
        return 0.5 * float(Hz @ z) + float(self.g_lin @ z) + self.f_const

    def gradient(self, z):
        return self.hess_vec(z) + self.g_lin

    def _stage_dynamics(self, z):
        xs, us = self.split(z)
        h = self.h
        f_knots = self.sys.rhs(xs, us)
        xc = 0.5 * (xs[:-1] + xs[1:]) + (h / 8.0) * (f_knots[:-1] - f_knots[1:])
        uc = 0.5 * (us[:-1] + us[1:])
        f_mid = self.sys.rhs(xc, uc)
        return xs, us, f_knots, xc, uc, f_mid

    def defects(self, z):
        """Hermite-Simpson defect vectors, shape (N, n)."""
        xs, _, fk, _, _, fc = self._stage_dynamics(z)
        return xs[1:] - xs[:-1] - (self.h / 6.0) * (fk[:-1] + 4.0 * fc + fk[1:])

    def eq_constraints(self, z):
        xs, _ = self.split(z)
        return np.concatenate([xs[0] - self.x_start, self.defects(z).ravel()])

    def eq_system(self, z):
        """Equality residuals plus jacobian blocks w.r.t. (x_k, u_k, x_{k+1},
        u_{k+1}) per segment, each of shape (N, n, .)."""
        xs, us, fk, xc, uc, fc = self._stage_dynamics(z)
        h, n = self.h, self.n
        cE = np.concatenate([xs[0] - self.x_start,
                             (xs[1:] - xs[:-1] - (h / 6.0) * (fk[:-1] + 4.0 * fc + fk[1:])).ravel()])
        A_kn, B_kn = self.sys.jac(xs, us)
        A_c, B_c = self.sys.jac(xc, uc)
        eye = np.eye(n)
        dxc_dxk = 0.5 * eye + (h / 8.0) * A_kn[:-1]
        dxc_dxk1 = 0.5 * eye - (h / 8.0) * A_kn[1:]
        dfc_dxk = A_c @ dxc_dxk
        dfc_dxk1 = A_c @ dxc_dxk1
        dfc_duk = (h / 8.0) * (A_c @ B_kn[:-1]) + 0.5 * B_c
        dfc_duk1 = -(h / 8.0) * (A_c @ B_kn[1:]) + 0.5 * B_c
        D_xk = -eye - (h / 6.0) * (A_kn[:-1] + 4.0 * dfc_dxk)
        D_uk = -(h / 6.0) * (B_kn[:-1] + 4.0 * dfc_duk)
        D_xk1 = eye - (h / 6.0) * (A_kn[1:] + 4.0 * dfc_dxk1)
        D_uk1 = -(h / 6.0) * (B_kn[1:] + 4.0 * dfc_duk1)
        return cE, (D_xk, D_uk, D_xk1, D_uk1)

    def quad_ineq(self, z):
        """Quadratic inequality rows g(z) <= 0: values (nq,), gradients w.r.t.
        the state block of their knot (nq, n), and knot indices (nq,)."""
        xs, _ = self.split(z)
        vals = np.empty(self.n_quad)
        grads = np.zeros((self.n_quad, self.n))
        knots = np.empty(self.n_quad, dtype=np.int64)
        for r, (kind, k, obs, level) in enumerate(self.quad_rows):
            knots[r] = k
            if kind == "obs":
                i, j = obs.coords
                y = np.array([xs[k, i], xs[k, j]]) - obs.a
                vals[r] = level - y @ obs.A @ y
                gy = -2.0 * (obs.A @ y)
                grads[r, i] = gy[0]
                grads[r, j] = gy[1]
            else:
                d = xs[k] - self.spec.goal.center
                vals[r] = d @ self.spec.goal.M @ d - level
                grads[r] = 2.0 * (self.spec.goal.M @ d)
        return vals, grads, knots
