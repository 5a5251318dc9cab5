"""Choosing the smoothing parameter and the number of components."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from joblib import Parallel, delayed

from .data import apply_scaling, standardize_columns
from .exceptions import DataValidationError, PenscaleError
from .linalg import pca, vaf
from .scaling import LAMBDA_FLOOR, AlsConfig, PenaltyConfig, als_fit

__all__ = [
    "LAMBDA_INF",
    "CvResult",
    "VafPath",
    "ScreeTable",
    "default_lambda_grid",
    "fold_indices",
    "validation_vaf",
    "cross_validate",
    "vaf_path",
    "choose_lambda_delta",
    "scree_table",
]

logger = logging.getLogger(__name__)

#: Stand-in for lambda -> infinity (linear PCA on labels).
LAMBDA_INF = 1e8


def default_lambda_grid():
    """25 log-spaced values on [1e-3, 1e3] bracketed by the two limit proxies."""
    return np.concatenate([[LAMBDA_FLOOR], np.logspace(-3, 3, 25), [LAMBDA_INF]])


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise DataValidationError("lambda grid is empty")
    if np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise DataValidationError("lambda grid must hold finite non-negative values")
    if np.any(np.diff(grid) <= 0):
        raise DataValidationError("lambda grid must be strictly increasing")
    return grid


@dataclass(frozen=True)
class CvResult:
    lambda_grid: np.ndarray
    fold_vaf: np.ndarray
    mean_vaf: np.ndarray
    best_lambda: float
    K: int
    seed: int
    m: int
    failed: np.ndarray = field(default=None, repr=False)

    def rows(self):
        """Long format ``(fold, lambda, vaf)``; fold ``"mean"`` holds CV(lambda)."""
        for k in range(self.K):
            for g, lam in enumerate(self.lambda_grid):
                yield k + 1, lam, self.fold_vaf[k, g]
        for g, lam in enumerate(self.lambda_grid):
            yield "mean", lam, self.mean_vaf[g]


@dataclass(frozen=True)
class VafPath:
    lambda_grid: np.ndarray
    train_vaf: np.ndarray
    delta: float = 1e-3
    lambda0: Optional[float] = None
    eigenvalues: Optional[np.ndarray] = field(default=None, repr=False)
    converged: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def is_monotone(self):
        return bool(np.all(np.diff(self.train_vaf) <= 1e-6))


@dataclass(frozen=True)
class ScreeTable:
    """Eigenvalue spectra per component count plus the linear-PCA baseline."""

    spectra: dict
    lambdas: dict
    baseline: np.ndarray

    def rows(self):
        for m in sorted(self.spectra):
            for r, ev in enumerate(self.spectra[m]):
                yield m, self.lambdas[m], r + 1, ev
        for r, ev in enumerate(self.baseline):
            yield "linear", float("inf"), r + 1, ev


def fold_indices(n, K, seed):
    """Random split of ``range(n)`` into K folds whose sizes differ by at most one."""
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, K)]


def validation_vaf(values, thetas, m):
    """VAF of the first ``m`` components on data scaled with fitted scores.

    The scaled columns are standardized within ``values`` itself.
    """
    phi = standardize_columns(apply_scaling(values, thetas))
    return vaf(pca(phi, m), m)


def _cv_cell(data, template, config, lam, train, val):
    fit = als_fit(data.subset(train), template.with_lambda(lam), config)
    return validation_vaf(data.values[val], fit.thetas, config.m)


def _safe_cell(*args):
    try:
        return _cv_cell(*args), None
    except (PenscaleError, np.linalg.LinAlgError) as exc:
        return np.nan, str(exc)


def cross_validate(data, penalty_template=None, config=None, grid=None, K=5, seed=0,
                   n_jobs=1, fit_hook: Optional[Callable] = None):
    """K-fold cross-validated VAF over a lambda grid.

    For every fold and lambda the scores are fit on the other K-1 folds,
    applied to the held-out fold, standardized there, and the VAF of the
    first ``m`` components is recorded. ``fit_hook(fold, lam, train_rows)``
    is called before each training fit.
    """
    config = config or AlsConfig()
    penalty_template = penalty_template or PenaltyConfig.for_data(data, 0.0)
    grid = _check_grid(default_lambda_grid() if grid is None else grid)
    if K < 2:
        raise DataValidationError(f"need K >= 2 folds, got {K}")
    if data.n < 2 * K:
        raise DataValidationError(f"need n >= 2K (n={data.n}, K={K}) so every fold can be standardized")
    folds = fold_indices(data.n, K, seed)
    tasks = []
    for k, val in enumerate(folds):
        train = np.setdiff1d(np.arange(data.n), val)
        for lam in grid:
            if fit_hook is not None:
                fit_hook(k, lam, train)
            tasks.append((data, penalty_template, config, lam, train, val))
    out = Parallel(n_jobs=n_jobs)(delayed(_safe_cell)(*t) for t in tasks)
    fold_vaf = np.array([v for v, _ in out]).reshape(K, grid.size)
    failed = np.isnan(fold_vaf)
    for (k, g) in zip(*np.nonzero(failed)):
        warnings.warn(f"fold {k + 1}, lambda={grid[g]:g} failed and is excluded: {out[k * grid.size + g][1]}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean_vaf = np.where(failed.all(axis=0), np.nan,
                            np.nansum(fold_vaf, axis=0) / np.maximum((~failed).sum(axis=0), 1))
    if np.all(np.isnan(mean_vaf)):
        raise PenscaleError("every cross-validation fit failed")
    best = np.nanmax(mean_vaf)
    # ties go to the larger (smoother) lambda
    best_idx = int(np.flatnonzero(mean_vaf == best)[-1])
    return CvResult(grid, fold_vaf, mean_vaf, float(grid[best_idx]), K, seed, config.m, failed)


def vaf_path(data, penalty_template=None, config=None, grid=None, delta=1e-3):
    """Training-data VAF as a function of lambda, with the delta-selected lambda0."""
    config = config or AlsConfig()
    penalty_template = penalty_template or PenaltyConfig.for_data(data, 0.0)
    grid = _check_grid(default_lambda_grid() if grid is None else grid)
    vafs, eigs, conv = [], [], []
    for lam in grid:
        try:
            fit = als_fit(data, penalty_template.with_lambda(lam), config)
        except PenscaleError as exc:
            warnings.warn(f"lambda={lam:g}: fit failed ({exc})")
            vafs.append(np.nan)
            eigs.append(np.full(data.p, np.nan))
            conv.append(False)
            continue
        vafs.append(fit.vaf_m)
        eigs.append(fit.eigenvalues)
        conv.append(fit.converged)
    path = VafPath(grid, np.array(vafs), delta, None, np.array(eigs), np.array(conv))
    if not path.is_monotone:
        warnings.warn("training VAF increases with lambda somewhere on the grid; "
                      "tighten epsilon or raise max_iter")
    return VafPath(grid, path.train_vaf, delta, choose_lambda_delta(path, delta), path.eigenvalues, path.converged)


def choose_lambda_delta(path, delta=1e-3):
    """Largest lambda whose training VAF is within ``delta`` of the smallest-lambda VAF.

    The smallest grid value serves as the unpenalized reference, so the grid
    should start at 0 or at the lambda -> 0 proxy.
    """
    if not delta > 0:
        raise DataValidationError(f"delta must be > 0, got {delta}")
    grid = np.asarray(path.lambda_grid, dtype=float)
    v = np.asarray(path.train_vaf, dtype=float)
    ok = np.flatnonzero(v[0] - v <= delta + 1e-12)
    if ok.size == 0:
        warnings.warn("no grid value satisfies the delta rule; returning the smallest lambda")
        return float(grid[0])
    return float(grid[ok[-1]])


def scree_table(data, m_list, lambdas=None, penalty_template=None, config=None,
                cv_grid=None, K=5, seed=0, n_jobs=1):
    """Full eigenvalue spectra after fitting the scores with each ``m``.

    ``lambdas`` is a mapping ``m -> lambda``, a single value for all ``m``,
    or ``None`` to pick each lambda by cross-validation.
    """
    config = config or AlsConfig()
    penalty_template = penalty_template or PenaltyConfig.for_data(data, 0.0)
    spectra, chosen = {}, {}
    for m in m_list:
        cfg = AlsConfig(m=m, epsilon=config.epsilon, max_iter=config.max_iter, seed=config.seed,
                        n_restarts=config.n_restarts, normalization=config.normalization)
        if lambdas is None:
            lam = cross_validate(data, penalty_template, cfg, cv_grid, K, seed, n_jobs).best_lambda
        elif isinstance(lambdas, dict):
            lam = lambdas[m]
        else:
            lam = float(lambdas)
        fit = als_fit(data, penalty_template.with_lambda(lam), cfg)
        spectra[m] = fit.eigenvalues
        chosen[m] = float(lam)
    baseline = pca(standardize_columns(data.values), data.p).eigenvalues
    return ScreeTable(spectra, chosen, baseline)
