"""Exhaustive active-set enumeration for small strictly convex QPs.

Independent of the ADMM path: every subset of at most ``n`` rows, each pinned
at its lower or upper bound, defines an equality-constrained QP solved through
its KKT system. The optimum is the feasible candidate of least objective.
Intended for ``n <= 6`` and a handful of constraints.
"""

from __future__ import annotations

import itertools

import numpy as np

from .problem import QpProblem


def brute_force_solve(p: QpProblem, feas_tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """Return ``(x, objective)`` of the minimiser; requires ``H`` positive definite."""
    n, mc = p.n, p.mc
    if np.linalg.eigvalsh(p.H).min() <= 0:
        raise ValueError("oracle requires a positive definite H")
    eq_rows = [i for i in range(mc) if p.lb[i] == p.ub[i]]
    free_rows = [i for i in range(mc) if p.lb[i] != p.ub[i]]
    if eq_rows and np.linalg.matrix_rank(p.A[eq_rows]) < len(eq_rows):
        raise ValueError("oracle requires linearly independent equality rows")
    best_x, best_obj = None, np.inf
    for k in range(0, min(n - len(eq_rows), len(free_rows)) + 1):
        for rows in itertools.combinations(free_rows, k):
            for sides in itertools.product((0, 1), repeat=k):
                b_free = [p.lb[r] if sd == 0 else p.ub[r] for r, sd in zip(rows, sides)]
                if not np.all(np.isfinite(b_free)):
                    continue
                active = eq_rows + list(rows)
                b = np.array([p.lb[i] for i in eq_rows] + b_free)
                x = _eq_qp(p.H, p.g, p.A[active], b)
                if x is None:
                    continue
                Ax = p.A @ x
                if np.all(Ax >= p.lb - feas_tol) and np.all(Ax <= p.ub + feas_tol):
                    obj = p.objective(x)
                    if obj < best_obj:
                        best_x, best_obj = x, obj
    if best_x is None:
        raise ValueError("no feasible active set found")
    return best_x, float(best_obj)


def _eq_qp(H, g, Aa, b):
    n, k = H.shape[0], Aa.shape[0]
    if k == 0:
        return np.linalg.solve(H, -g)
    if np.linalg.matrix_rank(Aa) < k:
        return None
    K = np.block([[H, Aa.T], [Aa, np.zeros((k, k))]])
    sol = np.linalg.solve(K, np.concatenate([-g, b]))
    return sol[:n]
