from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import linprog

from penscale import (
    DataValidationError,
    InfeasibleProblemError,
    NotPositiveDefiniteError,
    QpProblem,
    kkt_check,
    solve,
)

from conftest import brute_force_qp, random_qp


def test_unconstrained_minimum():
    sol = solve(QpProblem(np.eye(2), [1.0, 1.0]))
    np.testing.assert_allclose(sol.x, [1, 1])
    assert sol.objective == pytest.approx(-1.0)
    assert sol.active_set == ()


def test_bound_active():
    sol = solve(QpProblem(np.eye(1), [-2.0], Cineq=[[1.0]], bineq=[0.0]))
    np.testing.assert_allclose(sol.x, [0.0], atol=1e-14)
    np.testing.assert_allclose(sol.lagrange_ineq, [2.0])
    assert sol.active_set == (0,)


def test_equality_and_inequality():
    # min 0.5|x|^2 s.t. x1 + x2 = 2, x1 >= 1.5
    sol = solve(QpProblem(np.eye(2), [0.0, 0.0], Ceq=[[1.0, 1.0]], beq=[2.0], Cineq=[[1.0, 0.0]], bineq=[1.5]))
    np.testing.assert_allclose(sol.x, [1.5, 0.5])
    np.testing.assert_allclose(sol.lagrange_eq, [0.5])
    np.testing.assert_allclose(sol.lagrange_ineq, [1.0])


def test_random_six_dim_against_enumeration():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(100):
        M = rng.normal(size=(6, 6))
        P = QpProblem(M @ M.T + 0.1 * np.eye(6), rng.normal(size=6),
                      Cineq=rng.normal(size=(3, 6)), bineq=rng.normal(size=3))
        ref = brute_force_qp(P)
        sol = solve(P)
        np.testing.assert_allclose(sol.x, ref[0], atol=1e-7)
        assert kkt_check(P, sol).passed
        checked += 1
    assert checked == 100


def test_infeasible_reports_are_genuine():
    rng = np.random.default_rng(0)
    seen = 0
    for _ in range(400):
        P = random_qp(rng)
        try:
            solve(P)
            continue
        except InfeasibleProblemError:
            seen += 1
        e, q = P.Ceq.shape[0], P.Cineq.shape[0]
        lp = linprog(np.zeros(P.dim), A_ub=-P.Cineq if q else None, b_ub=-P.bineq if q else None,
                     A_eq=P.Ceq if e else None, b_eq=P.beq if e else None, bounds=[(None, None)] * P.dim)
        assert lp.status == 2
    assert seen > 0


def test_obviously_infeasible():
    P = QpProblem(np.eye(1), [0.0], Cineq=[[1.0], [-1.0]], bineq=[1.0, 0.0])
    with pytest.raises(InfeasibleProblemError):
        solve(P)


def test_not_positive_definite():
    with pytest.raises(NotPositiveDefiniteError):
        solve(QpProblem(np.diag([1.0, -1.0]), [0.0, 0.0]))
    with pytest.raises(NotPositiveDefiniteError):
        solve(QpProblem(np.diag([1.0, 1e-14]), [0.0, 0.0]))


def test_problem_validation():
    with pytest.raises(DataValidationError):
        QpProblem(np.eye(2), [1.0, 2.0, 3.0])
    with pytest.raises(DataValidationError):
        QpProblem(np.eye(2), [1.0, 2.0], Cineq=[[1.0, 0.0]], bineq=[1.0, 2.0])


def test_kkt_check_certifies_and_detects():
    P = QpProblem(np.array([[2.0, 0.5], [0.5, 1.0]]), [1.0, -1.0], Cineq=[[1.0, 1.0], [0.0, 1.0]], bineq=[1.0, 0.0])
    sol = solve(P)
    assert kkt_check(P, sol, tol=1e-6).passed

    moved = sol.x.copy()
    moved[0] += 1e-2
    bad = kkt_check(P, replace(sol, x=moved))
    expected = np.max(np.abs(P.G @ moved - P.a - P.Cineq.T @ sol.lagrange_ineq))
    assert not bad.passed
    assert bad.stationarity == pytest.approx(expected)
    assert bad.stationarity >= 1e-3

    lam = sol.lagrange_ineq.copy()
    lam[0] = -1.0
    report = kkt_check(P, replace(sol, lagrange_ineq=lam))
    assert not report.passed
    assert report.dual == pytest.approx(1.0)
