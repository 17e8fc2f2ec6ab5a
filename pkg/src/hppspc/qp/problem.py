from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

SYM_TOL = 1e-12


@dataclass(frozen=True)
class QpProblem:
    """``minimize 1/2 x'Hx + g'x  s.t.  lb <= Ax <= ub``; rows with lb == ub are equalities."""

    H: np.ndarray
    g: np.ndarray
    A: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def mc(self) -> int:
        return self.A.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.H @ x + self.g @ x)


@dataclass
class QpSolution:
    x: np.ndarray
    dual: np.ndarray
    status: str  # "solved" | "max_iter" | "infeasible"
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    polished: bool = False
    solve_time: float = 0.0

    @property
    def solved(self) -> bool:
        return self.status == "solved"


def assemble(H, g, A=None, lb=None, ub=None) -> QpProblem:
    """Validate and package a QP. ``A`` may be omitted for an unconstrained problem."""
    H = np.array(H, dtype=float, ndmin=2)
    g = np.array(g, dtype=float).ravel()
    n = g.size
    if H.shape != (n, n):
        raise ValueError(f"H has shape {H.shape}, expected {(n, n)}")
    if A is None:
        A = np.zeros((0, n))
        lb = np.zeros(0) if lb is None else lb
        ub = np.zeros(0) if ub is None else ub
    A = np.array(A, dtype=float, ndmin=2).reshape(-1, n)
    lb = np.array(lb, dtype=float).ravel()
    ub = np.array(ub, dtype=float).ravel()
    if lb.shape != (A.shape[0],) or ub.shape != (A.shape[0],):
        raise ValueError("lb and ub must have one entry per row of A")
    for name, arr in (("H", H), ("g", g), ("A", A), ("lb", lb), ("ub", ub)):
        if np.any(np.isnan(arr)):
            raise ValueError(f"{name} contains NaN")
    for name, arr in (("H", H), ("g", g), ("A", A)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains infinite entries")
    if np.any(lb == np.inf) or np.any(ub == -np.inf):
        raise ValueError("lb = +inf or ub = -inf makes the problem infeasible")
    bad = np.flatnonzero(lb > ub)
    if bad.size:
        raise ValueError(f"lb > ub in row(s) {bad.tolist()}")
    skew = np.max(np.abs(H - H.T)) if n else 0.0
    if skew > SYM_TOL:
        raise ValueError(f"H is not symmetric (max skew {skew:.3g})")
    H = 0.5 * (H + H.T)
    return QpProblem(H, g, A, lb, ub)


def dump_problem(p: QpProblem, directory) -> None:
    """Write H, g, A, lb, ub as CSV files for offline debugging."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in ("H", "g", "A", "lb", "ub"):
        np.savetxt(d / f"{name}.csv", np.atleast_2d(getattr(p, name)), delimiter=",",
                   fmt="%.17g")
