"""Dense convex QP: ``minimize 1/2 x'Hx + g'x  s.t.  lb <= Ax <= ub``."""

from .admm import AdmmSolver, QpSettings, kkt_residuals, solve
from .oracle import brute_force_solve
from .problem import QpProblem, QpSolution, assemble, dump_problem

__all__ = [
    "AdmmSolver", "QpProblem", "QpSettings", "QpSolution", "assemble",
    "brute_force_solve", "dump_problem", "kkt_residuals", "solve",
]
