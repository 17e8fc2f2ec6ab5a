"""Dense ADMM (operator-splitting) QP solver with active-set polishing.

The iteration follows the OSQP scheme: Ruiz equilibration, a cached Cholesky
factor of ``P + sigma I + A' diag(rho) A``, over-relaxation, adaptive ``rho``
and a primal-infeasibility certificate. Once the iterates identify an active
set the reduced KKT system is solved directly (polishing), which tightens
the solution to near machine precision.

Dual sign convention: ``H x + g + A' y = 0`` with ``y > 0`` on active upper
bounds and ``y < 0`` on active lower bounds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .problem import QpProblem, QpSolution


@dataclass(frozen=True)
class QpSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_pinf: float = 1e-5
    max_iter: int = 20000
    check_interval: int = 10
    scaling_iters: int = 10
    adaptive_rho: bool = True
    adaptive_rho_tolerance: float = 5.0
    rho_eq_scale: float = 1e3
    rho_min: float = 1e-6
    rho_max: float = 1e6
    polish: bool = True
    polish_delta: float = 1e-9
    polish_refine: int = 5
    # attempt polishing once residuals fall below this multiple of the tolerance
    polish_trigger: float = 1e4
    # unpolished iterates are accepted only below this fraction of the tolerance
    polish_fallback: float = 1e-2
    polish_feas_tol: float = 1e-9


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def _clip_norm(v, lo=1e-4, hi=1e4):
    v = np.where(v < lo, 1.0, v)
    return np.minimum(v, hi)


class AdmmSolver:
    """Reusable solver for a fixed ``(H, A)`` pair; ``g`` and bounds may change.

    Reusing one instance across related problems keeps the scaling and the
    matrix factorisation, which is what makes receding-horizon solves cheap.
    """

    def __init__(self, problem: QpProblem, settings: QpSettings = QpSettings()):
        self.settings = settings
        self.H = problem.H
        self.A = problem.A
        self.n, self.m = problem.n, problem.mc
        self._scale(problem)
        self.update(problem.g, problem.lb, problem.ub)
        self._rho_scalar = settings.rho
        self._factor_for(self._rho_scalar)
        self._x = np.zeros(self.n)
        self._z = np.zeros(self.m)
        self._y = np.zeros(self.m)

    # -- setup -----------------------------------------------------------
    def _scale(self, problem: QpProblem) -> None:
        s = self.settings
        P = problem.H.copy()
        A = problem.A.copy()
        q = problem.g.copy()
        D = np.ones(self.n)
        E = np.ones(self.m)
        c = 1.0
        for _ in range(s.scaling_iters):
            col_p = np.max(np.abs(P), axis=0) if self.n else np.zeros(0)
            col_a = np.max(np.abs(A), axis=0) if self.m else np.zeros(self.n)
            dn = 1.0 / np.sqrt(_clip_norm(np.maximum(col_p, col_a)))
            row_a = np.max(np.abs(A), axis=1) if self.m else np.zeros(0)
            dm = 1.0 / np.sqrt(_clip_norm(row_a))
            P = dn[:, None] * P * dn[None, :]
            A = dm[:, None] * A * dn[None, :]
            q = dn * q
            D *= dn
            E *= dm
            mean_col = float(np.mean(np.max(np.abs(P), axis=0))) if self.n else 0.0
            gamma = 1.0 / float(_clip_norm(np.array([max(mean_col, _inf_norm(q))]))[0])
            P *= gamma
            q *= gamma
            c *= gamma
        self.P_s, self.A_s, self.D, self.E, self.c = P, A, D, E, c

    def update(self, g=None, lb=None, ub=None) -> None:
        """Replace the linear term and/or bounds (unscaled)."""
        if g is not None:
            self.g = np.asarray(g, dtype=float)
            self.q_s = self.c * self.D * self.g
        if lb is not None:
            self.lb = np.asarray(lb, dtype=float)
        if ub is not None:
            self.ub = np.asarray(ub, dtype=float)
        if lb is not None or ub is not None:
            if np.any(self.lb > self.ub):
                raise ValueError("lb > ub")
            with np.errstate(invalid="ignore"):
                self.l_s = self.E * self.lb
                self.u_s = self.E * self.ub
            self.eq = self.lb == self.ub
            self._pattern = (self.eq.tobytes()
                             + (np.isneginf(self.lb) & np.isposinf(self.ub)).tobytes())

    def _rho_vector(self, rho: float) -> np.ndarray:
        s = self.settings
        r = np.full(self.m, rho)
        free = np.isneginf(self.l_s) & np.isposinf(self.u_s)
        r[free] = s.rho_min
        r[self.eq] = min(rho * s.rho_eq_scale, s.rho_max)
        return r

    def _factor_for(self, rho: float) -> None:
        s = self.settings
        self._rho_vec = self._rho_vector(rho)
        self._factor_pattern = self._pattern
        K = self.P_s + s.sigma * np.eye(self.n) + (self.A_s.T * self._rho_vec) @ self.A_s
        self._chol = sla.cho_factor(K, lower=True, check_finite=False)

    # -- iteration -------------------------------------------------------
    def warm_start(self, x=None, y=None) -> None:
        if x is not None:
            x = np.asarray(x, dtype=float)
            self._x = x / self.D
            self._z = np.clip(self.A_s @ self._x, self.l_s, self.u_s)
        if y is not None:
            self._y = self.c * np.asarray(y, dtype=float) / self.E

    def _unscaled(self, xs, zs, ys):
        return self.D * xs, zs / self.E, ys * self.E / self.c

    def _residuals(self, x, z, y):
        Ax = self.A @ x
        Hx = self.H @ x
        Aty = self.A.T @ y
        prim = _inf_norm(Ax - z)
        dual = _inf_norm(Hx + self.g + Aty)
        s = self.settings
        eps_p = s.eps_abs + s.eps_rel * max(_inf_norm(Ax), _inf_norm(z))
        eps_d = s.eps_abs + s.eps_rel * max(_inf_norm(Hx), _inf_norm(Aty), _inf_norm(self.g))
        return prim, dual, eps_p, eps_d

    def _primal_infeasible(self, dy_s) -> bool:
        dy = self.E * dy_s
        ndy = _inf_norm(dy)
        if ndy < 1e-12:
            return False
        tol = self.settings.eps_pinf * ndy
        if _inf_norm(self.A.T @ dy) > tol:
            return False
        pos, neg = dy > tol * 1e-3, dy < -tol * 1e-3
        if np.any(np.isposinf(self.ub[pos])) or np.any(np.isneginf(self.lb[neg])):
            return False
        support = float(self.ub[pos] @ dy[pos] + self.lb[neg] @ dy[neg])
        return support < -tol

    def _new_rho(self, xs, zs, ys) -> float:
        Ax = self.A_s @ xs
        prim = _inf_norm(Ax - zs) / max(_inf_norm(Ax), _inf_norm(zs), 1e-12)
        Px = self.P_s @ xs
        Aty = self.A_s.T @ ys
        dual = _inf_norm(Px + self.q_s + Aty) / max(_inf_norm(Px), _inf_norm(Aty),
                                                   _inf_norm(self.q_s), 1e-12)
        ratio = np.sqrt(prim / max(dual, 1e-12))
        s = self.settings
        return float(np.clip(self._rho_scalar * ratio, s.rho_min, s.rho_max))

    # -- polishing -------------------------------------------------------
    def polish(self, x, z, y):
        """Solve the KKT system on the active set guessed from ``(z, y)``.

        Returns ``(x, y, ok)`` where ``ok`` says whether the polished point
        satisfies the termination tolerances with consistent dual signs.
        """
        s = self.settings
        lower = (z - self.lb < -y) | self.eq
        upper = (self.ub - z < y) & ~self.eq
        lower &= ~upper
        act = np.flatnonzero(lower | upper)
        b = np.where(lower, self.lb, self.ub)[act]
        Aa = self.A[act]
        k = act.size
        K0 = np.block([[self.H, Aa.T], [Aa, np.zeros((k, k))]])
        Kd = K0 + np.diag(np.concatenate([np.full(self.n, s.polish_delta),
                                          np.full(k, -s.polish_delta)]))
        rhs = np.concatenate([-self.g, b])
        try:
            lu = sla.lu_factor(Kd, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            return x, y, False
        sol = sla.lu_solve(lu, rhs, check_finite=False)
        for _ in range(s.polish_refine):
            sol = sol + sla.lu_solve(lu, rhs - K0 @ sol, check_finite=False)
        if not np.all(np.isfinite(sol)):
            return x, y, False
        xp = sol[:self.n]
        yp = np.zeros(self.m)
        yp[act] = sol[self.n:]
        Ax = self.A @ xp
        zp = np.clip(Ax, self.lb, self.ub)
        prim, dual, eps_p, eps_d = self._residuals(xp, zp, yp)
        lo_only = lower & ~self.eq
        sign_ok = (np.all(yp[lo_only] <= eps_d) and np.all(yp[upper] >= -eps_d))
        # a correct active set leaves the inactive rows strictly feasible
        with np.errstate(invalid="ignore"):
            slack = s.polish_feas_tol * (1.0 + np.abs(zp))
        feas = bool(np.all(np.abs(Ax - zp) <= slack))
        return xp, yp, bool(prim <= eps_p and dual <= eps_d and sign_ok and feas)

    # -- main loop -------------------------------------------------------
    def solve(self) -> QpSolution:
        s = self.settings
        t0 = time.perf_counter()
        if self._pattern != self._factor_pattern:
            self._factor_for(self._rho_scalar)
        xs, zs, ys = self._x.copy(), self._z.copy(), self._y.copy()
        A_s, At_s = self.A_s, self.A_s.T
        l_s, u_s = self.l_s, self.u_s
        alpha, sigma = s.alpha, s.sigma
        best = None
        last_polish_key = None
        status = "max_iter"
        it = 0
        polished = False
        x = z = y = None
        while it < s.max_iter:
            it += 1
            rho = self._rho_vec
            y_prev = ys
            rhs = sigma * xs - self.q_s + At_s @ (rho * zs - ys)
            xt = sla.cho_solve(self._chol, rhs, check_finite=False)
            zt = A_s @ xt
            xs = alpha * xt + (1 - alpha) * xs
            zr = alpha * zt + (1 - alpha) * zs
            zs = np.clip(zr + ys / rho, l_s, u_s)
            ys = ys + rho * (zr - zs)

            if it % s.check_interval and it != s.max_iter:
                continue
            x, z, y = self._unscaled(xs, zs, ys)
            prim, dual, eps_p, eps_d = self._residuals(x, z, y)
            score = max(prim / eps_p, dual / eps_d)
            if best is None or score < best[0]:
                best = (score, x, z, y, prim, dual)
            if prim <= eps_p and dual <= eps_d:
                status = "solved"
                if not s.polish:
                    break
                xp, yp, ok = self.polish(x, z, y)
                if ok:
                    x, y, polished = xp, yp, True
                    z = np.clip(self.A @ x, self.lb, self.ub)
                    break
                # wrong active-set guess: iterate on until polishing succeeds
                # or the raw iterate is well inside the tolerances
                if prim <= s.polish_fallback * eps_p and dual <= s.polish_fallback * eps_d:
                    break
                continue
            if s.polish and score <= s.polish_trigger:
                key = ((z - self.lb < -y) | self.eq).tobytes() + (self.ub - z < y).tobytes()
                if key != last_polish_key:
                    last_polish_key = key
                    xp, yp, ok = self.polish(x, z, y)
                    if ok:
                        x, y, polished, status = xp, yp, True, "solved"
                        z = np.clip(self.A @ x, self.lb, self.ub)
                        break
            if self.m and self._primal_infeasible(ys - y_prev):
                status = "infeasible"
                break
            if s.adaptive_rho and it % (5 * s.check_interval) == 0:
                new = self._new_rho(xs, zs, ys)
                if new > self._rho_scalar * s.adaptive_rho_tolerance or \
                        new < self._rho_scalar / s.adaptive_rho_tolerance:
                    self._rho_scalar = new
                    self._factor_for(new)

        if status == "max_iter" and best is not None:
            _, x, z, y, _, _ = best
        prim, dual, _, _ = self._residuals(x, z, y)
        # keep the iterate for the next warm start
        self._x, self._z, self._y = x / self.D, z * self.E, y * self.c / self.E
        return QpSolution(
            x=x, dual=y, status=status, iterations=it, primal_residual=prim,
            dual_residual=dual, objective=float(0.5 * x @ self.H @ x + self.g @ x),
            polished=polished, solve_time=time.perf_counter() - t0,
        )


def solve(problem: QpProblem, settings: QpSettings = QpSettings(),
          warm_x=None, warm_y=None) -> QpSolution:
    """Solve one QP from scratch (optionally warm-started)."""
    solver = AdmmSolver(problem, settings)
    solver.warm_start(warm_x, warm_y)
    return solver.solve()


def kkt_residuals(p: QpProblem, s: QpSolution) -> tuple[float, float, float]:
    """Infinity norms of stationarity, bound violation and complementarity."""
    x, y = s.x, s.dual
    stat = _inf_norm(p.H @ x + p.g + p.A.T @ y)
    Ax = p.A @ x
    viol = np.maximum(Ax - p.ub, 0.0) + np.maximum(p.lb - Ax, 0.0)
    with np.errstate(invalid="ignore"):
        gap_u = np.where(y > 0, y * (p.ub - Ax), 0.0)
        gap_l = np.where(y < 0, -y * (Ax - p.lb), 0.0)
    comp = np.abs(np.concatenate([gap_u, gap_l]))
    comp = np.where(np.isnan(comp), np.inf, comp)
    return stat, _inf_norm(viol), _inf_norm(comp)
