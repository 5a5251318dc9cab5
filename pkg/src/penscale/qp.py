"""Strictly convex QP via the Goldfarb-Idnani dual active-set method.

Solves::

    minimize    0.5 x^T G x - a^T x
    subject to  Ceq x  = beq
                Cineq x >= bineq

The method starts from the unconstrained minimizer ``G^{-1} a`` and adds
violated constraints one at a time, keeping the iterate dual feasible. The
factorization ``L^{-1} N = Q R`` of the active normals is recomputed from
scratch at every step; problems here have a handful of variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr, solve_triangular

from .exceptions import DataValidationError, InfeasibleProblemError, NotPositiveDefiniteError, NumericalError

__all__ = ["QpProblem", "QpSolution", "KktReport", "solve", "kkt_check"]

MAX_CONDITION = 1e12


def _mat(C, d):
    if C is None:
        return np.zeros((0, d))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[1] != d:
        raise DataValidationError(f"constraint matrix has {C.shape[1]} columns, expected {d}")
    return C


def _vec(b, size, name):
    if b is None:
        b = np.zeros(size)
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.size != size:
        raise DataValidationError(f"{name} has length {b.size}, expected {size}")
    return b


@dataclass(frozen=True)
class QpProblem:
    G: np.ndarray
    a: np.ndarray
    Ceq: np.ndarray = None
    beq: np.ndarray = None
    Cineq: np.ndarray = None
    bineq: np.ndarray = None

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        d = G.shape[0]
        if G.shape != (d, d):
            raise DataValidationError(f"G must be square, got {G.shape}")
        if not np.allclose(G, G.T, rtol=0, atol=1e-10 * max(1.0, np.abs(G).max())):
            raise DataValidationError("G is not symmetric")
        a = _vec(self.a, d, "a")
        Ceq = _mat(self.Ceq, d)
        Cineq = _mat(self.Cineq, d)
        beq = _vec(self.beq, Ceq.shape[0], "beq")
        bineq = _vec(self.bineq, Cineq.shape[0], "bineq")
        if Ceq.shape[0] > d:
            raise DataValidationError("more equality constraints than variables")
        if Ceq.shape[0] and np.linalg.matrix_rank(Ceq) < Ceq.shape[0]:
            raise DataValidationError("equality constraints are linearly dependent")
        for name, val in (("G", G), ("a", a), ("Ceq", Ceq), ("beq", beq), ("Cineq", Cineq), ("bineq", bineq)):
            if not np.all(np.isfinite(val)):
                raise DataValidationError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, val)

    @property
    def dim(self):
        return self.G.shape[0]

    def objective(self, x):
        return float(0.5 * x @ self.G @ x - self.a @ x)


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    active_set: tuple
    lagrange_eq: np.ndarray
    lagrange_ineq: np.ndarray
    objective: float
    iterations: int = 0


@dataclass(frozen=True)
class KktReport:
    passed: bool
    primal: float
    dual: float
    stationarity: float
    complementarity: float


def _factor(G, max_condition):
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("G is not positive definite") from None
    ev = np.linalg.eigvalsh(G)
    if ev[0] <= 0 or ev[-1] / ev[0] > max_condition:
        raise NotPositiveDefiniteError(f"G is near-singular (condition number {ev[-1] / max(ev[0], 1e-300):.3g})")
    return L


def solve(problem, max_condition=MAX_CONDITION):
    """Global minimizer of a strictly convex QP with its multipliers.

    Raises
    ------
    NotPositiveDefiniteError
        ``G`` is indefinite or its condition number exceeds ``max_condition``.
    InfeasibleProblemError
        No point satisfies the constraints.
    NumericalError
        The iteration cap ``d + q + e + 50`` full steps was reached.
    """
    G, a = problem.G, problem.a
    d = problem.dim
    n_eq = problem.Ceq.shape[0]
    N = np.vstack([problem.Ceq, problem.Cineq])
    b = np.concatenate([problem.beq, problem.bineq])
    n_con = N.shape[0]

    L = _factor(G, max_condition)
    Linv = solve_triangular(L, np.eye(d), lower=True)
    x = Linv.T @ (Linv @ a)

    active = []   # constraint indices in order of addition
    signs = []    # +1, or -1 for equalities entered from the other side
    u = np.zeros(0)

    max_full = d + n_con + 50
    max_total = 10 * max_full
    full_steps = total = 0
    norms = np.linalg.norm(N, axis=1) if n_con else np.zeros(0)

    while True:
        pending_eq = [i for i in range(n_eq) if i not in active]
        if pending_eq:
            cand = pending_eq[0]
            sgn = -1.0 if N[cand] @ x - b[cand] > 0 else 1.0
        else:
            cand, worst = -1, 0.0
            xn = np.linalg.norm(x)
            for i in range(n_eq, n_con):
                if i in active:
                    continue
                slack = N[i] @ x - b[i]
                tol = 1e-12 * (1.0 + abs(b[i]) + norms[i] * xn)
                if slack < -tol and slack < worst:
                    cand, worst = i, slack
            if cand < 0:
                break
            sgn = 1.0
        if full_steps >= max_full:
            raise NumericalError(f"QP iteration cap of {max_full} full steps reached")

        n_p = sgn * N[cand]
        b_p = sgn * b[cand]
        u_plus = 0.0
        while True:
            total += 1
            if total > max_total:
                raise NumericalError("QP iteration cap reached")
            q = len(active)
            if q:
                Nact = (N[active].T * np.asarray(signs))
                Q, R = qr(Linv @ Nact, mode="full")
                R = R[:q, :q]
            else:
                Q, R = np.eye(d), np.zeros((0, 0))
            J = Linv.T @ Q
            J1, J2 = J[:, :q], J[:, q:]
            z = J2 @ (J2.T @ n_p)
            r = solve_triangular(R, J1.T @ n_p) if q else np.zeros(0)

            t1, drop = np.inf, -1
            for pos, ci in enumerate(active):
                if ci >= n_eq and r[pos] > 0:
                    ratio = u[pos] / r[pos]
                    if ratio < t1 or (ratio == t1 and ci < active[drop]):
                        t1, drop = ratio, pos
            zn = z @ n_p
            scale = np.sum((J.T @ n_p) ** 2)
            t2 = np.inf if zn <= 1e-13 * scale else -(n_p @ x - b_p) / zn
            t2 = max(t2, 0.0)

            if not np.isfinite(t1) and not np.isfinite(t2):
                raise InfeasibleProblemError(
                    f"constraints {sorted(active + [cand])} cannot be satisfied jointly",
                    constraints=sorted(active + [cand]),
                )
            if not np.isfinite(t2):
                u = u - t1 * r
                u_plus += t1
                del active[drop], signs[drop]
                u = np.delete(u, drop)
                continue
            t = min(t1, t2)
            x = x + t * z
            u = u - t * r
            u_plus += t
            if t2 <= t1:
                active.append(cand)
                signs.append(sgn)
                u = np.append(u, u_plus)
                full_steps += 1
                break
            del active[drop], signs[drop]
            u = np.delete(u, drop)

    lam = np.zeros(n_con)
    for pos, ci in enumerate(active):
        lam[ci] = signs[pos] * u[pos]
    lam_ineq = lam[n_eq:]
    lam_ineq[lam_ineq < 0] = 0.0  # roundoff only; dual feasibility is maintained by construction
    act = tuple(sorted(ci - n_eq for ci in active if ci >= n_eq))
    return QpSolution(
        x=x,
        active_set=act,
        lagrange_eq=lam[:n_eq],
        lagrange_ineq=lam_ineq,
        objective=problem.objective(x),
        iterations=total,
    )


def kkt_check(problem, solution, tol=1e-6):
    """Worst primal, dual, stationarity and complementarity residuals."""
    x = np.asarray(solution.x, dtype=float)
    leq = np.asarray(solution.lagrange_eq, dtype=float)
    lin = np.asarray(solution.lagrange_ineq, dtype=float)
    slack = problem.Cineq @ x - problem.bineq
    primal = max(
        float(np.max(-slack, initial=0.0)),
        float(np.max(np.abs(problem.Ceq @ x - problem.beq), initial=0.0)),
    )
    dual = float(np.max(-lin, initial=0.0))
    grad = problem.G @ x - problem.a - problem.Ceq.T @ leq - problem.Cineq.T @ lin
    stationarity = float(np.max(np.abs(grad), initial=0.0))
    complementarity = float(np.max(np.abs(lin * slack), initial=0.0))
    passed = max(primal, dual, stationarity, complementarity) <= tol
    return KktReport(passed, primal, dual, stationarity, complementarity)
