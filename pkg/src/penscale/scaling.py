"""Penalized optimal scaling of ordinal variables by alternating least squares.

The scaled matrix ``Phi`` holds level scores ``theta_j`` looked up per
observation. One ALS cycle runs a PCA on ``Phi``, forms the rank-m
pseudo responses ``U = Y A^T`` and refits every ``theta_j`` against its
column of ``U`` under a second-order difference penalty
``lambda_j * theta^T D2^T D2 theta`` with ``lambda_j = lambda * (k_j - 1)``,
optionally constrained to be non-decreasing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import qp
from .data import IndicatorMatrix, StandardizedMatrix, build_indicator, standardize_columns
from .exceptions import DataValidationError, NumericalError
from .linalg import PcaSolution, pca, pseudo_responses, vaf

__all__ = [
    "LAMBDA_FLOOR",
    "Quantification",
    "PenaltyConfig",
    "AlsConfig",
    "FitResult",
    "first_diff_matrix",
    "second_diff_matrix",
    "second_diff_penalty",
    "quantification_step",
    "als_fit",
    "orient",
]

logger = logging.getLogger(__name__)

#: Stand-in for lambda = 0 on variables with unobserved levels.
LAMBDA_FLOOR = 1e-8


def first_diff_matrix(k):
    """(k-1) x k matrix with rows encoding ``theta[l+1] - theta[l]``."""
    if k < 2:
        raise DataValidationError(f"need k >= 2 levels, got {k}")
    return np.diff(np.eye(k), axis=0)


def second_diff_matrix(k):
    """(k-2) x k matrix of second differences (empty for k = 2)."""
    if k < 2:
        raise DataValidationError(f"need k >= 2 levels, got {k}")
    return np.diff(np.eye(k), n=2, axis=0)


def second_diff_penalty(k):
    """Penalty matrix ``Omega = D2^T D2``; the zero matrix when k = 2."""
    D2 = second_diff_matrix(k)
    return D2.T @ D2


@dataclass(frozen=True)
class Quantification:
    """Scores of one variable's levels.

    ``theta`` is standardized so that the induced column has mean 0 and
    variance 1 over the fitting sample. ``raw_theta`` keeps the solution of
    the penalized fit before that affine standardization.
    """

    theta: np.ndarray
    variable_index: int
    monotone: bool = False
    orientation: str = "as-fit"
    raw_theta: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def k(self):
        return self.theta.size


@dataclass(frozen=True)
class PenaltyConfig:
    """Global smoothing parameter plus per-variable settings.

    Use :meth:`for_data` to build one matching an :class:`OrdinalDataMatrix`.
    """

    lam: float
    level_counts: tuple
    monotone_mask: tuple

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise DataValidationError(f"lambda must be finite and >= 0, got {self.lam}")
        counts = tuple(int(k) for k in self.level_counts)
        mask = tuple(bool(b) for b in self.monotone_mask)
        if len(mask) != len(counts):
            raise DataValidationError(f"monotone mask has {len(mask)} entries for {len(counts)} variables")
        object.__setattr__(self, "level_counts", counts)
        object.__setattr__(self, "monotone_mask", mask)
        object.__setattr__(self, "lam", float(self.lam))

    @classmethod
    def for_data(cls, data, lam, monotone=False):
        """``monotone`` is a bool applied to all variables or a length-p mask."""
        if np.ndim(monotone) == 0:
            monotone = [bool(monotone)] * data.p
        return cls(lam, tuple(data.level_counts), tuple(monotone))

    def with_lambda(self, lam):
        return replace(self, lam=lam)

    @property
    def per_variable_lambda(self):
        return np.array([self.lam * (k - 1) for k in self.level_counts])

    @property
    def omega(self):
        return [second_diff_penalty(k) for k in self.level_counts]


@dataclass(frozen=True)
class AlsConfig:
    """Settings of the ALS loop.

    ``normalization`` selects how the unit-variance requirement enters the
    quantification step; see :func:`quantification_step`.
    """

    m: int = 2
    epsilon: float = 1e-7
    max_iter: int = 100
    seed: Optional[int] = None
    n_restarts: int = 0
    normalization: str = "auto"

    def __post_init__(self):
        if self.m < 1:
            raise DataValidationError(f"m must be >= 1, got {self.m}")
        if not self.epsilon > 0:
            raise DataValidationError(f"epsilon must be > 0, got {self.epsilon}")
        if self.max_iter < 1:
            raise DataValidationError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.n_restarts < 0:
            raise DataValidationError("n_restarts must be >= 0")
        if self.normalization not in ("auto", "rescale", "linearized"):
            raise DataValidationError(f"unknown normalization {self.normalization!r}")


@dataclass(frozen=True)
class FitResult:
    quantifications: tuple
    scaled: StandardizedMatrix
    final_pca: PcaSolution
    vaf_m: float
    iterations: int
    converged: bool
    convergence_trace: np.ndarray
    loss_trace: np.ndarray
    lam: float
    m: int

    @property
    def thetas(self):
        return [q.theta for q in self.quantifications]

    @property
    def eigenvalues(self):
        return self.final_pca.eigenvalues


def _standardize_theta(Z, theta, label):
    phi = Z @ theta
    mu = phi.mean()
    sd = np.sqrt(((phi - mu) ** 2).sum() / (phi.size - 1))
    if not sd > 1e-12 * max(1.0, np.abs(theta).max()):
        raise NumericalError(f"variable {label}: quantified column has zero variance")
    return (theta - mu) / sd


def _solve_spd(G, rhs, label):
    try:
        return cho_solve(cho_factor(G), rhs)
    except np.linalg.LinAlgError:
        raise NumericalError(f"variable {label}: penalized normal equations are singular") from None


def quantification_step(Zj, uj, lambda_j, phi_prev, monotone=False, omega=None, normalization="auto"):
    """Refit the scores of one variable against its pseudo responses.

    Minimizes ``||u - Z theta||^2 + lambda_j theta^T Omega theta``, subject
    to non-decreasing ``theta`` when ``monotone``, and returns the scores
    standardized so that ``Z theta`` has mean 0 and variance 1.

    The unit-variance requirement is handled in one of two ways:

    ``"rescale"``
        Fit without it and standardize afterwards. At ``lambda_j = 0`` this
        is the exact minimizer over unit-variance columns (level means, or
        their isotonic regression when monotone).
    ``"linearized"``
        Impose ``phi_prev^T Z theta = n - 1`` inside the QP, the first-order
        expansion of the variance constraint around the previous iterate.

    ``"auto"`` uses ``"rescale"`` for ``lambda_j <= LAMBDA_FLOOR * (k - 1)``
    and ``"linearized"`` otherwise. ``"rescale"`` falls back to the
    linearized form when its fit is constant or anti-aligned with
    ``phi_prev``.

    Parameters
    ----------
    Zj : IndicatorMatrix or ndarray (n, k)
    uj : ndarray (n,)
    lambda_j : float
    phi_prev : ndarray (n,)
        Standardized column from the previous iterate.
    monotone : bool
    omega : ndarray (k, k), optional
        Penalty matrix; defaults to ``second_diff_penalty(k)``.
    normalization : {"auto", "rescale", "linearized"}

    Returns
    -------
    Quantification
        ``raw_theta`` holds the fit before standardization.
    """
    j = Zj.variable_index if isinstance(Zj, IndicatorMatrix) else -1
    Z = Zj.entries if isinstance(Zj, IndicatorMatrix) else np.asarray(Zj, dtype=float)
    u = np.asarray(uj, dtype=float)
    phi_prev = np.asarray(phi_prev, dtype=float)
    n, k = Z.shape
    if lambda_j < 0:
        raise DataValidationError("lambda_j must be >= 0")
    counts = Z.sum(axis=0)
    if lambda_j == 0 and np.any(counts == 0):
        raise NumericalError(f"variable {j}: levels {list(np.flatnonzero(counts == 0) + 1)} unobserved at lambda = 0")
    if omega is None:
        omega = second_diff_penalty(k)
    if normalization == "auto":
        normalization = "rescale" if lambda_j <= LAMBDA_FLOOR * (k - 1) * (1 + 1e-9) else "linearized"
    G = np.diag(counts) + lambda_j * omega
    zu = Z.T @ u
    D1 = first_diff_matrix(k) if monotone else None

    theta = None
    if normalization == "rescale":
        theta = _solve_spd(G, zu, j)
        if monotone and np.any(D1 @ theta < 0):
            theta = qp.solve(qp.QpProblem(G, zu, Cineq=D1, bineq=np.zeros(k - 1))).x
        centered = Z @ theta
        centered = centered - centered.mean()
        norm = np.linalg.norm(centered)
        if norm <= 1e-10 * max(np.linalg.norm(u), 1e-300) or phi_prev @ centered <= 1e-10 * norm * np.linalg.norm(phi_prev):
            logger.debug("variable %s: degenerate least-squares fit, using linearized constraint", j)
            theta = None
    elif normalization != "linearized":
        raise DataValidationError(f"unknown normalization {normalization!r}")
    if theta is None:
        c = Z.T @ phi_prev
        # closed form with the single equality; the QP only when monotonicity binds
        Ginv_zu = _solve_spd(G, zu, j)
        Ginv_c = _solve_spd(G, c, j)
        theta = Ginv_zu + (n - 1.0 - c @ Ginv_zu) / (c @ Ginv_c) * Ginv_c
        if monotone and np.any(D1 @ theta < -1e-12 * max(1.0, np.abs(theta).max())):
            problem = qp.QpProblem(G, zu, Ceq=c[None, :], beq=[n - 1.0], Cineq=D1, bineq=np.zeros(k - 1))
            theta = qp.solve(problem).x

    raw = theta.copy()
    theta = _standardize_theta(Z, theta, j)
    if monotone:
        # roundoff guard: active monotonicity constraints hold with equality
        theta = np.maximum.accumulate(theta)
    return Quantification(theta=theta, variable_index=j, monotone=bool(monotone), raw_theta=raw)


def _effective_lambdas(data, penalty):
    lams = penalty.per_variable_lambda
    if penalty.lam == 0:
        for j in range(data.p):
            observed = np.bincount(data.values[:, j], minlength=data.level_counts[j] + 1)[1:]
            if np.any(observed == 0):
                lams[j] = LAMBDA_FLOOR * (data.level_counts[j] - 1)
    return lams


def _run(data, Zs, omegas, lams, penalty, config, phi0, callback):
    n, p = data.n, data.p
    m = min(config.m, p)
    Phi = phi0
    trace, losses = [], []
    thetas = None
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        sol = pca(Phi, m)
        losses.append((n - 1) * (p - sol.eigenvalues[:m].sum()))
        U = pseudo_responses(sol).values
        thetas = [
            quantification_step(Zs[j], U[:, j], lams[j], Phi[:, j], penalty.monotone_mask[j],
                                omega=omegas[j], normalization=config.normalization)
            for j in range(p)
        ]
        Phi_new = np.column_stack([Zs[j].entries @ thetas[j].theta for j in range(p)])
        crit = float(np.mean((Phi - Phi_new) ** 2))
        trace.append(crit)
        Phi = Phi_new
        if callback is not None:
            callback(it, Phi, thetas)
        if crit < config.epsilon:
            converged = True
            break
    return Phi, thetas, it, converged, np.array(trace), np.array(losses)


def als_fit(data, penalty, config=None, callback: Optional[Callable] = None):
    """Fit penalized optimal scaling by alternating least squares.

    Starts from the standardized level labels. Iterates until the mean
    squared change of the scaled matrix drops below ``config.epsilon`` or
    ``config.max_iter`` cycles have run; non-convergence is reported in the
    result, not raised. ``callback(iteration, Phi, quantifications)`` is
    invoked after every cycle.
    """
    config = config or AlsConfig()
    if tuple(data.level_counts) != penalty.level_counts:
        raise DataValidationError("penalty level counts do not match the data")
    if config.m > data.p:
        raise DataValidationError(f"m={config.m} exceeds the number of variables p={data.p}")
    Zs = [build_indicator(data, j) for j in range(data.p)]
    omegas = penalty.omega
    lams = _effective_lambdas(data, penalty)
    labels = standardize_columns(data.values, data.variable_names).values

    starts = [labels]
    if config.n_restarts:
        rng = np.random.default_rng(config.seed)
        for _ in range(config.n_restarts):
            noisy = np.column_stack([
                Zs[j].entries @ np.sort(rng.normal(size=data.level_counts[j])) if penalty.monotone_mask[j]
                else Zs[j].entries @ rng.normal(size=data.level_counts[j])
                for j in range(data.p)
            ])
            try:
                starts.append(standardize_columns(noisy).values)
            except DataValidationError:
                continue

    best = None
    for phi0 in starts:
        run = _run(data, Zs, omegas, lams, penalty, config, phi0, callback)
        score = pca(run[0], config.m).eigenvalues[: config.m].sum()
        if best is None or score > best[0] + 1e-12:
            best = (score, run)
    Phi, thetas, it, converged, trace, losses = best[1]
    if not converged:
        logger.warning("ALS did not converge in %d iterations (lambda=%g)", it, penalty.lam)

    scaled = standardize_columns(Phi, data.variable_names)
    final = pca(scaled, data.p)
    final = PcaSolution(final.loadings[:, : config.m], final.scores[:, : config.m], final.eigenvalues, config.m)
    return FitResult(
        quantifications=tuple(thetas),
        scaled=scaled,
        final_pca=final,
        vaf_m=vaf(final, config.m),
        iterations=it,
        converged=converged,
        convergence_trace=trace,
        loss_trace=losses,
        lam=penalty.lam,
        m=config.m,
    )


def orient(q, rule="auto", tol=1e-12):
    """Resolve the sign ambiguity of a score vector.

    ``rule="trend"`` flips when the overall trend (sum of first differences)
    is negative; ``rule="convex"`` flips when the sum of second differences
    is negative (V rather than inverted V). ``"auto"`` uses the trend and
    falls back to convexity when the trend vanishes.
    """
    theta = np.asarray(q.theta if isinstance(q, Quantification) else q, dtype=float)
    trend = theta[-1] - theta[0]
    curv = np.diff(theta, 2).sum() if theta.size > 2 else 0.0
    scale = tol * max(1.0, np.abs(theta).max())
    if rule == "trend":
        flip = trend < 0
    elif rule == "convex":
        flip = curv < 0
    elif rule == "auto":
        flip = trend < -scale or (abs(trend) <= scale and curv < 0)
    else:
        raise ValueError(f"unknown orientation rule {rule!r}")
    new = -theta if flip else theta.copy()
    if not isinstance(q, Quantification):
        return new
    orientation = q.orientation if not flip else ("flipped" if q.orientation == "as-fit" else "as-fit")
    return replace(q, theta=new, orientation=orientation)
