"""Uncertainty-aware subspace predictive controller for the hybrid plant.

Decision vector ``x = [u_N; y_N; sigma_u; sigma_y]`` with channels ordered
(wind, solar, battery), sample-major. The behaviour constraint relaxes the
initial-condition blocks:

    y_N = S_y (y_ini + sigma_y) + S_u (u_ini + sigma_u) + S_f u_N

The battery setpoint covers the residual ``P_r - P_w^y - P_s^y`` at every
horizon sample, and wind setpoints/outputs are capped by the per-sample
quantile bound of available wind power.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .predictor import Predictor
from .qp import AdmmSolver, QpProblem, QpSettings, assemble

W, S, B = 0, 1, 2
CONSTRAINT_TOL = 1e-6


class InfeasibleControlError(RuntimeError):
    """The control QP was certified infeasible."""


@dataclass(frozen=True)
class ControllerConfig:
    n: int = 20
    t_ini: int = 20
    q_r: float = 1.0
    lam: float = 0.1
    lam_u: float = 10.0
    lam_y: float = 10.0
    q_w: float = -0.4
    p_b_min: float = -4.0
    p_b_max: float = 4.0
    sample_dt: float = 20.0
    qp: QpSettings = field(default_factory=QpSettings)

    def __post_init__(self):
        if self.n < 1 or self.t_ini < 1:
            raise ValueError("n and t_ini must be >= 1")
        if min(self.q_r, self.lam, self.lam_u, self.lam_y) < 0:
            raise ValueError("weights must be non-negative")
        if self.p_b_min > self.p_b_max:
            raise ValueError("p_b_min exceeds p_b_max")


@dataclass(frozen=True)
class History:
    """Most recent ``t_ini`` setpoints and measurements, oldest first."""

    u: np.ndarray  # (t_ini, m)
    y: np.ndarray  # (t_ini, p)

    def __post_init__(self):
        if self.u.ndim != 2 or self.y.ndim != 2 or self.u.shape[0] != self.y.shape[0]:
            raise ValueError("history buffers must be (t_ini, channels) with equal length")
        if self.u.shape[0] == 0:
            raise ValueError("history is empty")

    @property
    def u_ini(self) -> np.ndarray:
        return self.u.ravel()

    @property
    def y_ini(self) -> np.ndarray:
        return self.y.ravel()

    def push(self, u, y) -> "History":
        return History(np.vstack([self.u[1:], np.asarray(u, dtype=float)]),
                       np.vstack([self.y[1:], np.asarray(y, dtype=float)]))


@dataclass(frozen=True)
class HorizonData:
    p_ref: np.ndarray
    wind_bound: np.ndarray
    solar_bound: np.ndarray
    p_b_min: float = -4.0
    p_b_max: float = 4.0

    def __post_init__(self):
        n = len(self.p_ref)
        if len(self.wind_bound) != n or len(self.solar_bound) != n:
            raise ValueError("horizon arrays must share one length")
        if np.any(np.asarray(self.wind_bound) < 0) or np.any(np.asarray(self.solar_bound) < 0):
            raise ValueError("wind/solar bounds must be non-negative")


@dataclass(frozen=True)
class IndexMap:
    u: slice
    y: slice
    sigma_u: slice
    sigma_y: slice
    behavior: slice
    battery: slice
    box_u: slice
    box_y: slice

    @property
    def n_vars(self) -> int:
        return self.sigma_y.stop

    @property
    def n_rows(self) -> int:
        return self.box_y.stop


@dataclass
class ControlSolution:
    u_N: np.ndarray       # (N, m)
    y_N: np.ndarray       # (N, p)
    sigma_u: np.ndarray   # (t_ini*m,)
    sigma_y: np.ndarray   # (t_ini*p,)
    objective: float
    tracking_cost_per_step: np.ndarray
    solver_status: str
    iterations: int = 0
    solve_ms: float = 0.0
    max_wind_violation: float = 0.0
    max_battery_residual: float = 0.0
    p_ref: np.ndarray | None = None
    wind_bound: np.ndarray | None = None
    solar_bound: np.ndarray | None = None

    @property
    def constraints_ok(self) -> bool:
        return (self.max_wind_violation <= CONSTRAINT_TOL
                and self.max_battery_residual <= CONSTRAINT_TOL)


@dataclass(frozen=True)
class Forecast:
    time_s: np.ndarray
    wind: np.ndarray
    solar: np.ndarray
    battery: np.ndarray
    total: np.ndarray
    setpoints: np.ndarray  # (N, 3)

    @property
    def battery_setpoints(self) -> np.ndarray:
        return self.setpoints[:, B]


def index_map(cfg: ControllerConfig, m: int = 3, p: int = 3) -> IndexMap:
    N, Ti = cfg.n, cfg.t_ini
    a, b, c, d = N * m, N * m + N * p, N * m + N * p + Ti * m, N * m + N * p + Ti * m + Ti * p
    r1, r2, r3, r4 = N * p, N * p + N, N * p + N + N * m, N * p + N + N * m + N * p
    return IndexMap(slice(0, a), slice(a, b), slice(b, c), slice(c, d),
                    slice(0, r1), slice(r1, r2), slice(r2, r3), slice(r3, r4))


def _check_dims(cfg: ControllerConfig, pred: Predictor) -> None:
    if (pred.n, pred.t_ini) != (cfg.n, cfg.t_ini):
        raise ValueError(f"predictor dims (N={pred.n}, T_ini={pred.t_ini}) do not match "
                         f"config (N={cfg.n}, T_ini={cfg.t_ini})")
    if pred.m != 3 or pred.p != 3:
        raise ValueError("controller expects m = p = 3 (wind, solar, battery)")


def _hessian(cfg: ControllerConfig, ix: IndexMap, m: int, p: int) -> np.ndarray:
    N = cfg.n
    H = np.zeros((ix.n_vars, ix.n_vars))
    yw = ix.y.start + np.arange(N) * p + W
    ys = ix.y.start + np.arange(N) * p + S
    uw = ix.u.start + np.arange(N) * m + W
    for k in range(N):
        a = np.zeros(ix.n_vars)
        a[[yw[k], ys[k]]] = 1.0
        H += cfg.q_r * np.outer(a, a)
    for idx in (yw, uw):
        for k in range(N):
            d = np.zeros(ix.n_vars)
            d[idx[k]] = 1.0
            if k > 0:
                d[idx[k - 1]] = -1.0
            H += 2 * cfg.lam * np.outer(d, d)
    su, sy = np.arange(ix.n_vars)[ix.sigma_u], np.arange(ix.n_vars)[ix.sigma_y]
    H[su, su] += 2 * cfg.lam_u
    H[sy, sy] += 2 * cfg.lam_y
    return H


def _constraint_matrix(cfg: ControllerConfig, pred: Predictor, ix: IndexMap) -> np.ndarray:
    N, m, p = cfg.n, pred.m, pred.p
    A = np.zeros((ix.n_rows, ix.n_vars))
    A[ix.behavior, ix.u] = -pred.S_f
    A[ix.behavior, ix.y] = np.eye(N * p)
    A[ix.behavior, ix.sigma_u] = -pred.S_u
    A[ix.behavior, ix.sigma_y] = -pred.S_y
    rows = np.arange(ix.battery.start, ix.battery.stop)
    A[rows, ix.u.start + np.arange(N) * m + B] = 1.0
    A[rows, ix.y.start + np.arange(N) * p + W] = 1.0
    A[rows, ix.y.start + np.arange(N) * p + S] = 1.0
    A[ix.box_u, ix.u] = np.eye(N * m)
    A[ix.box_y, ix.y] = np.eye(N * p)
    return A


def _linear_terms(cfg, pred, ix, hist: History, hz: HorizonData, u_prev):
    """Linear cost, constant cost and bounds for the current step."""
    N, m, p = cfg.n, pred.m, pred.p
    r = np.asarray(hz.p_ref, dtype=float)
    g = np.zeros(ix.n_vars)
    yw = ix.y.start + np.arange(N) * p + W
    ys = ix.y.start + np.arange(N) * p + S
    uw = ix.u.start + np.arange(N) * m + W
    g[yw] -= cfg.q_r * r
    g[ys] -= cfg.q_r * r
    y_last = float(hist.y[-1, W])
    u_last = float(u_prev[W])
    g[yw[0]] -= 2 * cfg.lam * y_last
    g[uw[0]] -= 2 * cfg.lam * u_last
    const = 0.5 * cfg.q_r * float(r @ r) + cfg.lam * (y_last**2 + u_last**2)

    lb = np.empty(ix.n_rows)
    ub = np.empty(ix.n_rows)
    rhs = pred.S_y @ hist.y_ini + pred.S_u @ hist.u_ini
    lb[ix.behavior] = ub[ix.behavior] = rhs
    lb[ix.battery] = ub[ix.battery] = r
    lo = np.column_stack([np.zeros(N), np.zeros(N), np.full(N, hz.p_b_min)]).ravel()
    hi = np.column_stack([hz.wind_bound, hz.solar_bound, np.full(N, hz.p_b_max)]).ravel()
    lb[ix.box_u] = lb[ix.box_y] = lo
    ub[ix.box_u] = ub[ix.box_y] = hi
    return g, const, lb, ub


def build_problem(cfg: ControllerConfig, pred: Predictor, hist: History, hz: HorizonData,
                  u_prev=None) -> tuple[QpProblem, IndexMap]:
    """Assemble the control QP for one supervisory step.

    ``u_prev`` (last applied setpoints) defaults to the newest history entry.
    """
    _check_dims(cfg, pred)
    if hist.u.shape != (cfg.t_ini, pred.m) or hist.y.shape != (cfg.t_ini, pred.p):
        raise ValueError(f"history must hold {cfg.t_ini} samples of each channel")
    if len(hz.p_ref) != cfg.n:
        raise ValueError(f"horizon data has {len(hz.p_ref)} samples, expected {cfg.n}")
    ix = index_map(cfg, pred.m, pred.p)
    u_prev = hist.u[-1] if u_prev is None else np.asarray(u_prev, dtype=float)
    H = _hessian(cfg, ix, pred.m, pred.p)
    A = _constraint_matrix(cfg, pred, ix)
    g, _, lb, ub = _linear_terms(cfg, pred, ix, hist, hz, u_prev)
    return assemble(H, g, A, lb, ub), ix


class SpcController:
    """Receding-horizon controller holding one reusable QP workspace.

    The Hessian and constraint matrix depend only on the configuration and
    the predictor, so successive steps only update the linear term and
    bounds and warm-start from the shifted previous solution.
    """

    def __init__(self, cfg: ControllerConfig, pred: Predictor):
        _check_dims(cfg, pred)
        self.cfg = cfg
        self.pred = pred
        self.ix = index_map(cfg, pred.m, pred.p)
        self.H = _hessian(cfg, self.ix, pred.m, pred.p)
        self.A = _constraint_matrix(cfg, pred, self.ix)
        self._solver: AdmmSolver | None = None
        self._last_x: np.ndarray | None = None

    def _shifted(self, x: np.ndarray) -> np.ndarray:
        """Advance a solution by one sample, repeating the final sample."""
        out = x.copy()
        for sl, width in ((self.ix.u, self.pred.m), (self.ix.y, self.pred.p),
                          (self.ix.sigma_u, self.pred.m), (self.ix.sigma_y, self.pred.p)):
            seg = x[sl].reshape(-1, width)
            out[sl] = np.vstack([seg[1:], seg[-1:]]).ravel()
        return out

    def step(self, hist: History, hz: HorizonData, u_prev=None,
             warm_start: bool = True, warm_x=None) -> ControlSolution:
        """Solve one step. ``warm_x`` overrides the shifted previous solution."""
        cfg, pred, ix = self.cfg, self.pred, self.ix
        if len(hz.p_ref) != cfg.n:
            raise ValueError(f"horizon data has {len(hz.p_ref)} samples, expected {cfg.n}")
        u_prev = hist.u[-1] if u_prev is None else np.asarray(u_prev, dtype=float)
        g, const, lb, ub = _linear_terms(cfg, pred, ix, hist, hz, u_prev)
        if self._solver is None:
            self._solver = AdmmSolver(assemble(self.H, g, self.A, lb, ub), cfg.qp)
        else:
            self._solver.update(g, lb, ub)
        if warm_x is not None:
            self._solver.warm_start(np.asarray(warm_x, dtype=float))
        elif warm_start and self._last_x is not None:
            self._solver.warm_start(self._shifted(self._last_x))
        elif not warm_start:
            self._solver.warm_start(np.zeros(ix.n_vars), np.zeros(ix.n_rows))
        t0 = time.perf_counter()
        sol = self._solver.solve()
        solve_ms = 1e3 * (time.perf_counter() - t0)
        if sol.status == "infeasible":
            raise InfeasibleControlError("control QP certified infeasible")
        self._last_x = sol.x
        return _unpack(cfg, pred, ix, sol, const, hz, solve_ms)


def _unpack(cfg, pred, ix, sol, const, hz, solve_ms) -> ControlSolution:
    x = sol.x
    u_N = x[ix.u].reshape(cfg.n, pred.m)
    y_N = x[ix.y].reshape(cfg.n, pred.p)
    r = np.asarray(hz.p_ref, dtype=float)
    wind_viol = np.concatenate([u_N[:, W] - hz.wind_bound, y_N[:, W] - hz.wind_bound])
    batt = u_N[:, B] - (r - y_N[:, W] - y_N[:, S])
    return ControlSolution(
        u_N=u_N, y_N=y_N, sigma_u=x[ix.sigma_u].copy(), sigma_y=x[ix.sigma_y].copy(),
        objective=sol.objective + const,
        tracking_cost_per_step=r - y_N[:, W] - y_N[:, S],
        solver_status=sol.status, iterations=sol.iterations, solve_ms=solve_ms,
        max_wind_violation=float(max(0.0, wind_viol.max())),
        max_battery_residual=float(np.abs(batt).max()),
        p_ref=r, wind_bound=np.asarray(hz.wind_bound, dtype=float),
        solar_bound=np.asarray(hz.solar_bound, dtype=float),
    )


def control_step(cfg: ControllerConfig, pred: Predictor, hist: History, hz: HorizonData,
                 u_prev=None, warm_start=None) -> ControlSolution:
    """Single cold solve; ``warm_start`` may be a previous decision vector."""
    return SpcController(cfg, pred).step(hist, hz, u_prev, warm_start=False,
                                         warm_x=warm_start)


def forecast(sol: ControlSolution, t0: float, sample_dt: float = 20.0) -> Forecast:
    """Per-component predicted outputs over the horizon, stamped ``t0 + k*dt``."""
    N = sol.y_N.shape[0]
    w, s, b = sol.y_N[:, W].copy(), sol.y_N[:, S].copy(), sol.y_N[:, B].copy()
    return Forecast(time_s=t0 + sample_dt * np.arange(1, N + 1), wind=w, solar=s,
                    battery=b, total=w + s + b, setpoints=sol.u_N.copy())


def relaxation_norms(sol: ControlSolution) -> tuple[float, float]:
    return float(np.linalg.norm(sol.sigma_u)), float(np.linalg.norm(sol.sigma_y))
