"""Sequential quadratic programming tailored to the collocation NLPs.

The QP subproblems are strictly convex (the exact Hessian of the quadratic
objective plus a tiny ridge), with the collocation equality jacobian, simple
variable bounds and a handful of linearized quadratic rows.  Each QP is
solved with a Mehrotra predictor-corrector interior point method whose
Newton systems are assembled directly in LAPACK banded storage: primal
variables and equality duals are interleaved per knot, so the KKT matrix has
bandwidth 3n+m regardless of the horizon length.  The outer loop is a line
search SQP on the l1 merit function.  Everything is deterministic: fixed
tolerances, fixed iteration order, no randomness.
"""

import logging

import numpy as np
from scipy.linalg import get_lapack_funcs

log = logging.getLogger(__name__)


class BandedKkt:
    """Precomputed scatter pattern for [[H~, J^T], [J, 0]] in banded storage,
    for the interleaved per-knot ordering of a CollocationNlp."""

    def __init__(self, nlp):
        n, m, w, N = nlp.n, nlp.m, nlp.w, nlp.N
        self.n, self.m, self.w, self.N = n, m, w, N
        self.dim = (N + 1) * w + (N + 1) * n
        self.bw = 2 * w + 2 * n - 1

        off_z = np.empty(N + 1, dtype=np.int64)
        off_z[0] = 0
        if N >= 1:
            off_z[1] = w + 2 * n
            for k in range(2, N + 1):
                off_z[k] = off_z[k - 1] + w + n
        off_yinit = w
        off_ydef = np.array([off_z[k] + w if k >= 1 else w + n for k in range(N)],
                            dtype=np.int64) if N >= 1 else np.empty(0, dtype=np.int64)

        self.perm_primal = (off_z[:, None] + np.arange(w)[None, :]).ravel()
        pd = [off_yinit + np.arange(n)]
        for k in range(N):
            pd.append(off_ydef[k] + np.arange(n))
        self.perm_dual = np.concatenate(pd)

        rows = []
        cols = []
        # H~ diagonal blocks
        ii, jj = np.meshgrid(np.arange(w), np.arange(w), indexing="ij")
        rows.append((off_z[:, None, None] + ii[None]).ravel())
        cols.append((off_z[:, None, None] + jj[None]).ravel())
        # H off-diagonal blocks (objective coupling of consecutive knots)
        if N >= 1:
            r_off = (off_z[:-1, None, None] + ii[None]).ravel()
            c_off = (off_z[1:, None, None] + jj[None]).ravel()
            rows.append(r_off)
            cols.append(c_off)
            rows.append(c_off)
            cols.append(r_off)
        # initial-state identity block and transpose
        rows.append(off_yinit + np.arange(n))
        cols.append(np.arange(n))
        rows.append(np.arange(n))
        cols.append(off_yinit + np.arange(n))
        # dual-diagonal slots (zero unless the elastic relaxation is active)
        rows.append(self.perm_dual)
        cols.append(self.perm_dual)
        # defect blocks (D_xk, D_uk, D_xk1, D_uk1) and transposes
        if N >= 1:
            di, dj_n = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            dj_m = np.broadcast_to(np.arange(m)[None, :], (n, m))
            r_def = off_ydef[:, None, None] + di[None]
            r_defm = off_ydef[:, None, None] + np.broadcast_to(np.arange(n)[:, None], (n, m))[None]
            c_xk = off_z[:-1, None, None] + dj_n[None]
            c_uk = off_z[:-1, None, None] + n + dj_m[None]
            c_xk1 = off_z[1:, None, None] + dj_n[None]
            c_uk1 = off_z[1:, None, None] + n + dj_m[None]
            for rr, cc in ((r_def, c_xk), (r_defm, c_uk), (r_def, c_xk1), (r_defm, c_uk1)):
                rows.append(rr.ravel())
                cols.append(cc.ravel())
                rows.append(cc.ravel())
                cols.append(rr.ravel())
        self.rows = np.concatenate(rows)
        self.cols = np.concatenate(cols)
        if np.abs(self.rows - self.cols).max() > self.bw:
            raise AssertionError("band width violated by scatter pattern")
        flat = self.rows * self.dim + self.cols
        if len(np.unique(flat)) != len(flat):
            raise AssertionError("duplicate positions in KKT scatter pattern")
        self.band_rows = 2 * self.bw + self.rows - self.cols
        self.ab = np.zeros((3 * self.bw + 1, self.dim))
        self._gbtrf, self._gbtrs = get_lapack_funcs(("gbtrf", "gbtrs"),
                                                    (np.empty(0, dtype=float),))

    def values(self, Hdiag, Hoff, Dxk, Duk, Dxk1, Duk1, dual_diag=None):
        """Value vector matching the scatter pattern order.  Each transposed
        group reuses blk.ravel() directly: its (row, col) position arrays are
        already swapped, so the values must keep the original element order."""
        n = self.n
        nE = len(self.perm_dual)
        parts = [Hdiag.ravel()]
        if self.N >= 1:
            parts.append(Hoff.ravel())
            parts.append(Hoff.ravel())
        parts.append(np.ones(n))
        parts.append(np.ones(n))
        parts.append(np.zeros(nE) if dual_diag is None else dual_diag)
        if self.N >= 1:
            for blk in (Dxk, Duk, Dxk1, Duk1):
                parts.append(blk.ravel())
                parts.append(blk.ravel())
        return np.concatenate(parts)

    def factor(self, vals):
        self.ab.fill(0.0)
        self.ab[self.band_rows, self.cols] = vals
        lu, ipiv, info = self._gbtrf(self.ab, self.bw, self.bw)
        if info != 0:
            return None
        return (lu, ipiv)

    def solve(self, fac, rhs_d, rhs_e):
        full = np.zeros(self.dim)
        full[self.perm_primal] = rhs_d
        full[self.perm_dual] = rhs_e
        x, info = self._gbtrs(fac[0], self.bw, self.bw, full, fac[1])
        if info != 0:
            return None, None
        return x[self.perm_primal], x[self.perm_dual]


class QpResult:
    def __init__(self, d, y, lam_q, status, mu):
        self.d = d
        self.y = y
        self.lam_q = lam_q
        self.status = status
        self.mu = mu


def _h_vec(kkt, Hdiag, Hoff, v):
    vv = v.reshape(kkt.N + 1, kkt.w)
    Hv = np.einsum("kij,kj->ki", Hdiag, vv)
    if kkt.N >= 1:
        Hv[:-1] += np.einsum("kij,kj->ki", Hoff, vv[1:])
        Hv[1:] += np.einsum("kij,ki->kj", Hoff, vv[:-1])
    return Hv.ravel()


def solve_qp(kkt, Hdiag, Hoff, g, Dxk, Duk, Dxk1, Duk1, bE, bl, bu, Jq_grads,
             Jq_knots, bQ, max_iter=60, tol=1e-10, sigma_fixed=None,
             elastic=None):
    """Strictly convex QP via predictor-corrector interior point.

    min 1/2 d^T H d + g^T d  s.t.  J_E d = bE,  bl <= d <= bu (finite entries
    only),  Jq d <= bQ (rows supported on the state block of one knot each).

    sigma_fixed switches to a conservative single-solve path-following
    variant (fixed centering, shorter steps) that is slower but rescues
    instances where the aggressive predictor-corrector oscillates.

    elastic=nu softens the equalities with l1-penalized slack pairs
    (J d + v+ - v- = bE, cost nu*sum(v+ + v-)): the subproblem is then
    always feasible and its solution is an l1-merit descent direction.  In
    the reduced KKT system the slacks appear as a negative diagonal on the
    dual block.  res.veq holds the equality residual J d - bE at the
    solution.
    """
    N, n, w = kkt.N, kkt.n, kkt.w
    nz = len(g)
    il = np.flatnonzero(np.isfinite(bl))
    iu = np.flatnonzero(np.isfinite(bu))
    nq = len(bQ)
    nl, nu = len(il), len(iu)
    n_compl = nl + nu + nq
    qk = np.asarray(Jq_knots, dtype=np.int64)

    d = np.zeros(nz)
    y = np.zeros(kkt.dim - nz)
    sl = np.maximum(-bl[il], 1.0)
    zl = np.ones(nl)
    su = np.maximum(bu[iu], 1.0)
    zu = np.ones(nu)
    sq = np.maximum(bQ, 1.0)
    lam = np.ones(nq)
    nE = kkt.dim - nz
    if elastic is not None:
        vp = np.ones(nE)
        vm = np.ones(nE)
        zp = np.full(nE, 0.5 * elastic)
        zm = np.full(nE, 0.5 * elastic)
        n_compl += 2 * nE

    def jq_dot(v):
        if nq == 0:
            return np.empty(0)
        vv = v.reshape(N + 1, w)[:, :n]
        return np.sum(Jq_grads * vv[qk], axis=1)

    def jqT_dot(r):
        out = np.zeros((N + 1, w))
        if nq:
            np.add.at(out[:, :n], qk, Jq_grads * r[:, None])
        return out.ravel()

    gnorm = max(1.0, np.abs(g).max())
    status = "failed"
    mu = np.inf
    mu0 = None
    for it in range(max_iter):
        r_d = _h_vec(kkt, Hdiag, Hoff, d) + g
        r_d += _jeT_dot(kkt, Dxk, Duk, Dxk1, Duk1, y)
        if nl:
            r_d[il] -= zl
        if nu:
            r_d[iu] += zu
        r_d += jqT_dot(lam)
        r_E = _je_dot(kkt, Dxk, Duk, Dxk1, Duk1, d) - bE
        if elastic is not None:
            r_E = r_E + vp - vm
            rvp = elastic + y - zp
            rvm = elastic - y - zm
        r_l = d[il] - sl - bl[il] if nl else np.empty(0)
        r_u = d[iu] + su - bu[iu] if nu else np.empty(0)
        r_q = jq_dot(d) + sq - bQ if nq else np.empty(0)

        mu = ((sl @ zl if nl else 0.0) + (su @ zu if nu else 0.0)
              + (sq @ lam if nq else 0.0)
              + ((vp @ zp + vm @ zm) if elastic is not None else 0.0)
              ) / max(n_compl, 1)
        if mu0 is None:
            mu0 = mu
        if mu > 1e8 * (1.0 + mu0):
            # runaway duals: the linearized constraints are infeasible
            return QpResult(None, None, None, "infeasible", mu)
        feas = max(np.abs(r_E).max(initial=0.0), np.abs(r_l).max(initial=0.0),
                   np.abs(r_u).max(initial=0.0), np.abs(r_q).max(initial=0.0))
        dual_feas = np.abs(r_d).max(initial=0.0)
        if elastic is not None:
            dual_feas = max(dual_feas, np.abs(rvp).max(initial=0.0),
                            np.abs(rvm).max(initial=0.0))
        if mu < tol and feas < tol * 10 and dual_feas < tol * 100 * gnorm:
            status = "optimal"
            break

        Hb = Hdiag.copy()
        diag = np.zeros(nz)
        if nl:
            diag[il] += zl / sl
        if nu:
            diag[iu] += zu / su
        dd = diag.reshape(N + 1, w)
        Hb[:, np.arange(w), np.arange(w)] += dd
        if nq:
            coef = lam / sq
            outer = Jq_grads[:, :, None] * Jq_grads[:, None, :] * coef[:, None, None]
            np.add.at(Hb[:, :n, :n], qk, outer)

        dual_diag = None
        if elastic is not None:
            dual_diag = -(vp / zp + vm / zm)
        fac = kkt.factor(kkt.values(Hb, Hoff, Dxk, Duk, Dxk1, Duk1, dual_diag))
        if fac is None:
            return QpResult(None, None, None, "singular", mu)

        def build_rhs(rcl, rcu, rcq, rcp=None, rcm=None):
            extra = np.zeros(nz)
            if nl:
                extra[il] += (zl * r_l - rcl) / sl
            if nu:
                extra[iu] += (zu * r_u + rcu) / su
            if nq:
                extra += jqT_dot((rcq + lam * r_q) / sq)
            rhs_e = -r_E
            if elastic is not None:
                rhs_e = rhs_e - (rcp - vp * rvp) / zp + (rcm - vm * rvm) / zm
            return -(r_d + extra), rhs_e

        if sigma_fixed is None:
            # affine (predictor) direction
            rc_aff = (-sl * zl, -su * zu, -sq * lam,
                      -vp * zp if elastic is not None else None,
                      -vm * zm if elastic is not None else None)
            rhs_d, rhs_e = build_rhs(*rc_aff)
            dd_aff, dy_aff = kkt.solve(fac, rhs_d, rhs_e)
            if dd_aff is None:
                return QpResult(None, None, None, "singular", mu)
            dsl_aff = dd_aff[il] + r_l if nl else np.empty(0)
            dzl_aff = (-sl * zl - zl * dsl_aff) / sl if nl else np.empty(0)
            dsu_aff = -(dd_aff[iu] + r_u) if nu else np.empty(0)
            dzu_aff = (-su * zu - zu * dsu_aff) / su if nu else np.empty(0)
            dsq_aff = -(jq_dot(dd_aff) + r_q) if nq else np.empty(0)
            dlam_aff = (-sq * lam - lam * dsq_aff) / sq if nq else np.empty(0)
            if elastic is not None:
                dzp_aff = dy_aff + rvp
                dvp_aff = (-vp * zp - vp * dzp_aff) / zp
                dzm_aff = -dy_aff + rvm
                dvm_aff = (-vm * zm - vm * dzm_aff) / zm
            else:
                dzp_aff = dvp_aff = dzm_aff = dvm_aff = np.empty(0)

            a_pri = _max_step(np.concatenate([sl, su, sq,
                                              vp if elastic is not None else np.empty(0),
                                              vm if elastic is not None else np.empty(0)]),
                              np.concatenate([dsl_aff, dsu_aff, dsq_aff,
                                              dvp_aff, dvm_aff]))
            a_dua = _max_step(np.concatenate([zl, zu, lam,
                                              zp if elastic is not None else np.empty(0),
                                              zm if elastic is not None else np.empty(0)]),
                              np.concatenate([dzl_aff, dzu_aff, dlam_aff,
                                              dzp_aff, dzm_aff]))
            mu_aff = ((np.maximum(sl + a_pri * dsl_aff, 0) @ np.maximum(zl + a_dua * dzl_aff, 0) if nl else 0.0)
                      + (np.maximum(su + a_pri * dsu_aff, 0) @ np.maximum(zu + a_dua * dzu_aff, 0) if nu else 0.0)
                      + (np.maximum(sq + a_pri * dsq_aff, 0) @ np.maximum(lam + a_dua * dlam_aff, 0) if nq else 0.0)
                      + ((np.maximum(vp + a_pri * dvp_aff, 0) @ np.maximum(zp + a_dua * dzp_aff, 0)
                          + np.maximum(vm + a_pri * dvm_aff, 0) @ np.maximum(zm + a_dua * dzm_aff, 0))
                         if elastic is not None else 0.0)
                      ) / max(n_compl, 1)
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.1
            corr_l = sigma * mu - sl * zl - dsl_aff * dzl_aff if nl else np.empty(0)
            corr_u = sigma * mu - su * zu - dsu_aff * dzu_aff if nu else np.empty(0)
            corr_q = sigma * mu - sq * lam - dsq_aff * dlam_aff if nq else np.empty(0)
            corr_p = sigma * mu - vp * zp - dvp_aff * dzp_aff if elastic is not None else None
            corr_m = sigma * mu - vm * zm - dvm_aff * dzm_aff if elastic is not None else None
            tau = 0.995
        else:
            sigma = sigma_fixed
            corr_l = sigma * mu - sl * zl if nl else np.empty(0)
            corr_u = sigma * mu - su * zu if nu else np.empty(0)
            corr_q = sigma * mu - sq * lam if nq else np.empty(0)
            corr_p = sigma * mu - vp * zp if elastic is not None else None
            corr_m = sigma * mu - vm * zm if elastic is not None else None
            tau = 0.9

        rhs_d, rhs_e = build_rhs(corr_l, corr_u, corr_q, corr_p, corr_m)
        dd_c, dy_c = kkt.solve(fac, rhs_d, rhs_e)
        if dd_c is None:
            return QpResult(None, None, None, "singular", mu)
        dsl = dd_c[il] + r_l if nl else np.empty(0)
        dzl = (corr_l - zl * dsl) / sl if nl else np.empty(0)
        dsu = -(dd_c[iu] + r_u) if nu else np.empty(0)
        dzu = (corr_u - zu * dsu) / su if nu else np.empty(0)
        dsq = -(jq_dot(dd_c) + r_q) if nq else np.empty(0)
        dlam = (corr_q - lam * dsq) / sq if nq else np.empty(0)
        if elastic is not None:
            dzp = dy_c + rvp
            dvp = (corr_p - vp * dzp) / zp
            dzm = -dy_c + rvm
            dvm = (corr_m - vm * dzm) / zm
        else:
            dzp = dvp = dzm = dvm = np.empty(0)

        # one common step length: the residuals couple primal and dual
        # variables, so split LP-style steps do not contract them
        alpha = tau * min(
            _max_step(np.concatenate([sl, su, sq,
                                      vp if elastic is not None else np.empty(0),
                                      vm if elastic is not None else np.empty(0)]),
                      np.concatenate([dsl, dsu, dsq, dvp, dvm])),
            _max_step(np.concatenate([zl, zu, lam,
                                      zp if elastic is not None else np.empty(0),
                                      zm if elastic is not None else np.empty(0)]),
                      np.concatenate([dzl, dzu, dlam, dzp, dzm])))
        alpha = min(alpha, 1.0)

        d = d + alpha * dd_c
        y = y + alpha * dy_c
        if nl:
            sl, zl = sl + alpha * dsl, zl + alpha * dzl
        if nu:
            su, zu = su + alpha * dsu, zu + alpha * dzu
        if nq:
            sq, lam = sq + alpha * dsq, lam + alpha * dlam
        if elastic is not None:
            vp, zp = vp + alpha * dvp, zp + alpha * dzp
            vm, zm = vm + alpha * dvm, zm + alpha * dzm
    else:
        status = "optimal" if (mu < 1e-7) else "failed"

    zl_full = np.zeros(nz)
    zu_full = np.zeros(nz)
    if nl:
        zl_full[il] = zl
    if nu:
        zu_full[iu] = zu
    res = QpResult(d, y, lam, status, mu)
    res.zl = zl_full
    res.zu = zu_full
    res.fac = fac if 'fac' in dir() else None
    res.veq = (vp - vm) if elastic is not None else None
    res.model_l1 = float((vp + vm).sum()) if elastic is not None else 0.0
    return res


def _max_step(v, dv, floor=1e-30):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-v[neg] / np.minimum(dv[neg], -floor))))


def _je_dot(kkt, Dxk, Duk, Dxk1, Duk1, v):
    """J_E v from the defect blocks: rows [v_x0 ; per-segment defect rows]."""
    N, n, w = kkt.N, kkt.n, kkt.w
    vv = v.reshape(N + 1, w)
    out = [vv[0, :n]]
    if N >= 1:
        seg = (np.einsum("kij,kj->ki", Dxk, vv[:-1, :n])
               + np.einsum("kij,kj->ki", Duk, vv[:-1, n:])
               + np.einsum("kij,kj->ki", Dxk1, vv[1:, :n])
               + np.einsum("kij,kj->ki", Duk1, vv[1:, n:]))
        out.append(seg.ravel())
    return np.concatenate(out)


def _jeT_dot(kkt, Dxk, Duk, Dxk1, Duk1, y):
    N, n, w = kkt.N, kkt.n, kkt.w
    out = np.zeros((N + 1, w))
    out[0, :n] += y[:n]
    if N >= 1:
        yy = y[n:].reshape(N, n)
        out[:-1, :n] += np.einsum("kij,ki->kj", Dxk, yy)
        out[:-1, n:] += np.einsum("kij,ki->kj", Duk, yy)
        out[1:, :n] += np.einsum("kij,ki->kj", Dxk1, yy)
        out[1:, n:] += np.einsum("kij,ki->kj", Duk1, yy)
    return out.ravel()


class SqpResult:
    def __init__(self, z, success, status, iterations, defect_max, quad_viol, objective):
        self.z = z
        self.success = success
        self.status = status
        self.iterations = iterations
        self.defect_max = defect_max
        self.quad_viol = quad_viol
        self.objective = objective


def _block_bfgs_update(B, s, y, w, damp=0.2):
    """Powell-damped BFGS update applied per knot block (keeps the KKT
    banded; the classical structured update for multiple-shooting SQP)."""
    K = B.shape[0]
    ss = s.reshape(K, w)
    yy = y.reshape(K, w)
    for k in range(K):
        sk, yk = ss[k], yy[k]
        sn = sk @ sk
        if sn < 1e-16:
            continue
        Bs = B[k] @ sk
        sBs = float(sk @ Bs)
        sy = float(sk @ yk)
        if sy < damp * sBs:
            theta = (1.0 - damp) * sBs / (sBs - sy)
            yk = theta * yk + (1.0 - theta) * Bs
            sy = float(sk @ yk)
        if sy <= 1e-14 * sBs or sBs <= 0:
            continue
        B[k] += np.outer(yk, yk) / sy - np.outer(Bs, Bs) / sBs


def solve_nlp(nlp, z0, max_iter=300, feas_tol=1e-9, step_tol=1e-10,
              defect_tol=1e-6, ineq_tol=1e-8):
    """Line-search SQP with an l1 merit function on a CollocationNlp.

    The Hessian model starts from the exact (quadratic) objective Hessian
    and accumulates constraint curvature through per-knot block-BFGS updates
    of the Lagrangian.  Returns an SqpResult; success requires max defect <=
    defect_tol and quadratic-constraint violation <= ineq_tol at the final
    iterate.
    """
    kkt = BandedKkt(nlp)
    z = np.clip(z0, nlp.lb, nlp.ub)
    ridge = 1e-9 * (1.0 + float(np.abs(nlp.H_blocks).max()))
    Hq = nlp.H_blocks.copy()
    Hq[:, np.arange(nlp.w), np.arange(nlp.w)] += ridge

    def off_prod(v):
        vv = v.reshape(nlp.N + 1, nlp.w)
        out = np.zeros_like(vv)
        if nlp.N >= 1:
            out[:-1] += np.einsum("kij,kj->ki", nlp.H_off, vv[1:])
            out[1:] += np.einsum("kij,ki->kj", nlp.H_off, vv[:-1])
        return out.ravel()

    def grad_lagrangian(g_vec, blocks, qgrads_, qknots_, y_, lam_):
        gl = g_vec + _jeT_dot(kkt, *blocks, y_)
        if len(lam_):
            out = np.zeros((nlp.N + 1, nlp.w))
            np.add.at(out[:, : nlp.n], qknots_, qgrads_ * lam_[:, None])
            gl = gl + out.ravel()
        return gl

    prev = None  # (z_old, gradL_old at old point with new duals' preview)
    nu = 10.0
    status = "max_iterations"
    it = 0
    best_viol = np.inf
    stall = 0
    for it in range(1, max_iter + 1):
        cE, (Dxk, Duk, Dxk1, Duk1) = nlp.eq_system(z)
        cQ, qgrads, qknots = nlp.quad_ineq(z)
        g = nlp.gradient(z)
        if prev is not None:
            z_old, y_prev, lam_prev, gradL_old = prev
            s = z - z_old
            gradL_new = grad_lagrangian(g, (Dxk, Duk, Dxk1, Duk1),
                                        qgrads, qknots, y_prev, lam_prev)
            _block_bfgs_update(Hq, s, gradL_new - gradL_old - off_prod(s), nlp.w)
            prev = None
        viol = float(np.abs(cE).sum() + np.maximum(cQ, 0.0).sum())
        feas = float(max(np.abs(cE).max(initial=0.0), np.maximum(cQ, 0.0).max(initial=0.0)))
        if feas > feas_tol:
            if viol < 0.995 * best_viol:
                stall = 0
            else:
                stall += 1
                if stall >= 50:
                    status = "no_progress"
                    break
        best_viol = min(best_viol, viol)

        qp = solve_qp(kkt, Hq, nlp.H_off, g, Dxk, Duk, Dxk1, Duk1, -cE,
                      nlp.lb - z, nlp.ub - z, qgrads, qknots, -cQ)
        model_l1 = 0.0
        if qp.d is None or qp.status == "failed":
            # the hard subproblem can be infeasible within the variable
            # bounds (or the predictor-corrector oscillates); re-solve in
            # elastic mode, whose solution is an l1-merit descent direction
            qp = solve_qp(kkt, Hq, nlp.H_off, g, Dxk, Duk, Dxk1, Duk1, -cE,
                          nlp.lb - z, nlp.ub - z, qgrads, qknots, -cQ,
                          elastic=nu)
            if qp.d is None or qp.status == "failed":
                qp = solve_qp(kkt, Hq, nlp.H_off, g, Dxk, Duk, Dxk1, Duk1,
                              -cE, nlp.lb - z, nlp.ub - z, qgrads, qknots,
                              -cQ, max_iter=150, sigma_fixed=0.3, elastic=nu)
            if qp.d is None or qp.status == "failed":
                status = "qp_failure"
                break
            model_l1 = qp.model_l1
        d = qp.d
        if model_l1 == 0.0:
            # penalty update only from hard-QP multipliers: elastic duals are
            # capped by nu itself and would self-amplify the penalty
            duals = max(np.abs(qp.y).max(initial=0.0), np.abs(qp.lam_q).max(initial=0.0),
                        qp.zl.max(initial=0.0), qp.zu.max(initial=0.0))
            nu = max(nu, 1.5 * duals + 1.0)
            if nu > 1e10:
                status = "penalty_diverged"
                break

        step = float(np.abs(d).max(initial=0.0))
        if step <= step_tol and feas <= feas_tol:
            status = "converged"
            break

        f0 = nlp.objective(z)
        phi0 = f0 + nu * viol
        descent = float(g @ d) - nu * max(viol - model_l1, 0.0)
        alpha = 1.0
        accepted = False
        soc_done = False
        for _ in range(30):
            z_try = z + alpha * d
            cE_t = nlp.eq_constraints(z_try)
            cQ_t, _, _ = nlp.quad_ineq(z_try)
            viol_t = float(np.abs(cE_t).sum() + np.maximum(cQ_t, 0.0).sum())
            phi_t = nlp.objective(z_try) + nu * viol_t
            if phi_t <= phi0 + 1e-4 * alpha * min(descent, 0.0) + 1e-12 * abs(phi0):
                accepted = True
                break
            if alpha == 1.0 and not soc_done and qp.fac is not None:
                # second-order correction: retarget the constraint residual
                # at the trial point through the last KKT factorization
                soc_done = True
                d_soc, _ = kkt.solve(qp.fac, np.zeros(nlp.nz), -cE_t)
                if d_soc is not None:
                    z_soc = np.clip(z + d + d_soc, nlp.lb, nlp.ub)
                    cE_s = nlp.eq_constraints(z_soc)
                    cQ_s, _, _ = nlp.quad_ineq(z_soc)
                    viol_s = float(np.abs(cE_s).sum() + np.maximum(cQ_s, 0.0).sum())
                    phi_s = nlp.objective(z_soc) + nu * viol_s
                    if phi_s <= phi0 + 1e-4 * min(descent, 0.0) + 1e-12 * abs(phi0):
                        z_try = z_soc
                        accepted = True
                        break
            alpha *= 0.5
        if not accepted:
            if feas <= feas_tol:
                status = "converged"
            else:
                status = "line_search_failure"
            break
        gradL_here = grad_lagrangian(g, (Dxk, Duk, Dxk1, Duk1),
                                     qgrads, qknots, qp.y, qp.lam_q)
        prev = (z, qp.y, qp.lam_q, gradL_here)
        z = z_try

    cE = nlp.eq_constraints(z)
    cQ, _, _ = nlp.quad_ineq(z)
    defect_max = float(np.abs(cE).max(initial=0.0))
    quad_viol = float(np.maximum(cQ, 0.0).max(initial=0.0))
    obj = nlp.objective(z)
    # what matters downstream is a feasible trajectory within tolerances;
    # a solver stop at a feasible iterate is a usable outcome
    success = (defect_max <= defect_tol and quad_viol <= ineq_tol
               and np.isfinite(obj))
    if success and status not in ("converged",):
        status = f"feasible_stop({status})"
    if not success:
        log.debug("SQP failed: status=%s defect=%.2e quad=%.2e it=%d",
                  status, defect_max, quad_viol, it)
    return SqpResult(z, success, status, it, defect_max, quad_viol, obj)
