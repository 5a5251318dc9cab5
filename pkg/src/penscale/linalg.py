"""PCA step: thin SVD, principal components, VAF and pseudo responses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import StandardizedMatrix
from .exceptions import DataValidationError, NumericalError

__all__ = ["PcaSolution", "PseudoResponseMatrix", "thin_svd", "pca", "vaf", "pseudo_responses"]


@dataclass(frozen=True)
class PcaSolution:
    """Loadings ``A`` (p x m), scores ``Y`` (n x m) and the full eigenvalue spectrum."""

    loadings: np.ndarray
    scores: np.ndarray
    eigenvalues: np.ndarray
    m: int

    @property
    def p(self):
        return self.eigenvalues.size


@dataclass(frozen=True)
class PseudoResponseMatrix:
    """Rank-m reconstruction ``U = Y A^T`` used as regression target."""

    values: np.ndarray


def thin_svd(matrix):
    """Thin SVD ``M = U diag(d) V^T`` of an n x p matrix with ``n >= p``.

    Returns
    -------
    U : ndarray (n, p)
    d : ndarray (p,), non-increasing
    V : ndarray (p, p)
    """
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2:
        raise DataValidationError("thin_svd expects a 2-d matrix")
    n, p = M.shape
    if n < p:
        raise DataValidationError(f"thin_svd needs n >= p, got {n}x{p}")
    if not np.all(np.isfinite(M)):
        raise NumericalError("thin_svd input contains non-finite entries")
    try:
        U, d, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    return U, d, Vt.T


def _canonical_signs(V):
    # largest-magnitude entry of each column positive; argmax picks the lowest index on ties
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def pca(std, m):
    """Principal components of a column-standardized matrix.

    Eigenvalues are ``d_r**2 / (n - 1)`` for all p components; when the
    matrix has fewer rows than columns the trailing ones are zero.
    """
    X = std.values if isinstance(std, StandardizedMatrix) else np.asarray(std, dtype=float)
    n, p = X.shape
    if not 1 <= m <= p:
        raise DataValidationError(f"component count m={m} outside 1..{p}")
    if n >= p:
        _, d, V = thin_svd(X)
    else:
        U, d, _ = thin_svd(X.T)
        V = U
    eig = np.zeros(p)
    eig[: d.size] = d ** 2 / (n - 1)
    A = _canonical_signs(V[:, :m])
    return PcaSolution(loadings=A, scores=X @ A, eigenvalues=eig, m=m)


def vaf(solution, m=None):
    """Proportion of variance accounted for by the first ``m`` components."""
    m = solution.m if m is None else m
    if not 0 <= m <= solution.p:
        raise DataValidationError(f"m={m} outside 0..{solution.p}")
    return float(solution.eigenvalues[:m].sum() / solution.p)


def pseudo_responses(solution):
    return PseudoResponseMatrix(solution.scores @ solution.loadings.T)
