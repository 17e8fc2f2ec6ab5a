import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hppspc.qp import (AdmmSolver, QpSettings, assemble, brute_force_solve, dump_problem,
                       kkt_residuals, solve)

from qp_cases import random_qp


def test_assemble_unconstrained():
    p = assemble(np.eye(2), np.zeros(2))
    assert p.mc == 0


def test_assemble_rejects_crossed_bounds():
    with pytest.raises(ValueError, match="lb > ub"):
        assemble([[1.0]], [0.0], [[1.0]], [1.0], [0.0])


def test_assemble_symmetrises_tiny_skew():
    H = np.array([[1.0, 1e-15], [0.0, 1.0]])
    p = assemble(H, np.zeros(2))
    np.testing.assert_array_equal(p.H, p.H.T)


def test_assemble_rejects_asymmetric_and_nan():
    with pytest.raises(ValueError, match="symmetric"):
        assemble([[1.0, 1.0], [0.0, 1.0]], [0.0, 0.0])
    with pytest.raises(ValueError, match="NaN"):
        assemble([[1.0]], [np.nan])


def test_lower_bound_active():
    p = assemble([[1.0]], [0.0], [[1.0]], [1.0], [np.inf])
    s = solve(p)
    assert s.solved and s.x[0] == pytest.approx(1.0, abs=1e-9)
    assert max(kkt_residuals(p, s)) < 1e-6


def test_unconstrained_identity():
    c = np.array([1.0, -2.0, 3.0])
    s = solve(assemble(np.eye(3), -c))
    np.testing.assert_allclose(s.x, c, atol=1e-9)


def test_zero_problem():
    p = assemble(1e-6 * np.eye(2), np.zeros(2), np.eye(2), [-1, -1], [1, 1])
    s = solve(p)
    np.testing.assert_allclose(s.x, 0.0, atol=1e-9)
    assert max(kkt_residuals(p, s)) < 1e-9


def test_perturbation_inflates_stationarity():
    p = assemble(np.eye(2), [-1.0, -1.0])
    s = solve(p)
    s.x = s.x + 1e-2
    assert kkt_residuals(p, s)[0] > 1e-3


def test_matches_oracle_on_random_problems():
    rng = np.random.default_rng(11)
    for _ in range(40):
        p = random_qp(rng)
        _, obj = brute_force_solve(p)
        s = solve(p)
        assert s.solved
        assert abs(s.objective - obj) <= 1e-6 * (1 + abs(obj))
        assert max(kkt_residuals(p, s)) < 1e-6


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_bounds_hold(seed):
    p = random_qp(np.random.default_rng(seed))
    s = solve(p)
    Ax = p.A @ s.x
    assert np.all(Ax >= p.lb - 1e-6) and np.all(Ax <= p.ub + 1e-6)


def test_infeasible_certified():
    # x <= 0 and x >= 1 through two rows
    p = assemble([[1.0]], [0.0], [[1.0], [1.0]], [-np.inf, 1.0], [0.0, np.inf])
    assert solve(p).status == "infeasible"


def test_max_iter_returns_best_iterate():
    rng = np.random.default_rng(0)
    p = random_qp(rng)
    s = solve(p, QpSettings(max_iter=3, polish=False))
    assert s.status == "max_iter" and s.iterations == 3
    assert np.all(np.isfinite(s.x))


def test_warm_start_agrees_with_cold():
    rng = np.random.default_rng(5)
    p = random_qp(rng)
    cold = solve(p)
    warm = solve(p, warm_x=cold.x, warm_y=cold.dual)
    assert warm.objective == pytest.approx(cold.objective, rel=1e-6, abs=1e-9)
    assert warm.iterations <= cold.iterations


def test_solver_reuse_with_new_bounds():
    p = assemble(np.eye(2), [-2.0, -2.0], np.eye(2), [-1, -1], [1, 1])
    solver = AdmmSolver(p)
    np.testing.assert_allclose(solver.solve().x, [1, 1], atol=1e-8)
    solver.update(lb=[-1, -1], ub=[0.5, 3.0])
    np.testing.assert_allclose(solver.solve().x, [0.5, 2.0], atol=1e-8)
    solver.update(lb=[0.25, -1], ub=[0.25, 3.0])  # row 0 becomes an equality
    np.testing.assert_allclose(solver.solve().x, [0.25, 2.0], atol=1e-8)


def test_oracle_preconditions():
    with pytest.raises(ValueError, match="positive definite"):
        brute_force_solve(assemble(np.zeros((1, 1)), [0.0]))
    p = assemble(np.eye(2), [0, 0], [[1, 0], [2, 0]], [1, 2], [1, 2])
    with pytest.raises(ValueError, match="independent"):
        brute_force_solve(p)


def test_dump_problem(tmp_path):
    p = assemble(np.eye(2), [1.0, 2.0], np.eye(2), [0, 0], [1, 1])
    dump_problem(p, tmp_path)
    np.testing.assert_array_equal(np.loadtxt(tmp_path / "g.csv", delimiter=","), p.g)
