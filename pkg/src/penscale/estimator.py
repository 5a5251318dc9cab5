"""scikit-learn compatible estimator wrapping penalized optimal scaling."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import OrdinalDataMatrix, apply_scaling
from .exceptions import DataValidationError
from .scaling import AlsConfig, PenaltyConfig, als_fit
from .select import validation_vaf

__all__ = ["PenalizedOrdinalPCA", "check_ordinal_array"]


def check_ordinal_array(X, level_counts=None):
    """Validate an integer level matrix on the ``1..k_j`` scale.

    Returns the array as int64 and the level counts (declared or observed).
    """
    X = check_array(X, dtype=None, ensure_min_samples=2)
    if not np.issubdtype(X.dtype, np.integer):
        Xf = np.asarray(X, dtype=float)
        if np.any(Xf != np.round(Xf)):
            raise DataValidationError("ordinal input must contain integer levels")
        X = Xf
    X = X.astype(np.int64)
    if level_counts is None:
        level_counts = X.max(axis=0)
    level_counts = np.asarray(level_counts, dtype=np.int64)
    if level_counts.shape != (X.shape[1],):
        raise DataValidationError(f"level_counts has shape {level_counts.shape}, expected ({X.shape[1]},)")
    if X.min() < 1 or np.any(X > level_counts):
        raise DataValidationError("levels must lie in 1..k_j")
    return X, level_counts


class PenalizedOrdinalPCA(TransformerMixin, BaseEstimator):
    """Penalized non-linear PCA for ordinal variables.

    Learns one score per level of every variable so that ``n_components``
    principal components of the scaled data explain maximal variance,
    with a second-order difference penalty of strength ``lam`` pulling the
    scores towards the linear labels.

    Parameters
    ----------
    n_components : int
        Number of components the scores are optimized for.
    lam : float
        Smoothing parameter; 0 gives unpenalized optimal scaling, large
        values give linear PCA on the standardized labels.
    monotone : bool or array of bool
        Force non-decreasing scores for all or selected variables.
    level_counts : array of int, optional
        Declared number of levels per variable; defaults to the observed maxima.
    epsilon, max_iter : float, int
        Convergence threshold and iteration cap of the ALS loop.
    normalization : {"auto", "rescale", "linearized"}
    n_restarts : int
        Extra randomly initialized runs; the best is kept.
    random_state : int, optional
        Seed for the restarts.

    Attributes
    ----------
    quantifications_ : list of ndarray
        Level scores per variable.
    components_ : ndarray (n_components, n_features)
        Loadings of the final PCA.
    eigenvalues_ : ndarray (n_features,)
        Full spectrum of the correlation matrix of the scaled training data.
    explained_variance_ratio_ : ndarray (n_features,)
    n_iter_ : int
    converged_ : bool
    feature_names_in_ : ndarray of str
        Only set when ``X`` has column names.
    fit_result_ : FitResult
    """

    def __init__(self, n_components=2, lam=0.0, monotone=False, level_counts=None,
                 epsilon=1e-7, max_iter=100, normalization="auto", n_restarts=0, random_state=None):
        self.n_components = n_components
        self.lam = lam
        self.monotone = monotone
        self.level_counts = level_counts
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.normalization = normalization
        self.n_restarts = n_restarts
        self.random_state = random_state

    def fit(self, X, y=None):
        names = getattr(X, "columns", None)
        names = None if names is None else [str(c) for c in names]
        X, counts = check_ordinal_array(X, self.level_counts)
        data = OrdinalDataMatrix(X, level_counts=counts, variable_names=names)
        penalty = PenaltyConfig.for_data(data, self.lam, self.monotone)
        config = AlsConfig(m=self.n_components, epsilon=self.epsilon, max_iter=self.max_iter,
                           seed=self.random_state, n_restarts=self.n_restarts,
                           normalization=self.normalization)
        res = als_fit(data, penalty, config)
        self.fit_result_ = res
        self.level_counts_ = counts
        self.quantifications_ = [q.theta.copy() for q in res.quantifications]
        self.components_ = res.final_pca.loadings.T.copy()
        self.eigenvalues_ = res.eigenvalues.copy()
        self.explained_variance_ratio_ = self.eigenvalues_ / data.p
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        self.n_features_in_ = data.p
        if names is not None:
            self.feature_names_in_ = np.asarray(names, dtype=object)
        return self

    def _levels(self, X):
        check_is_fitted(self, "quantifications_")
        X, _ = check_ordinal_array(X, self.level_counts_)
        if X.shape[1] != self.n_features_in_:
            raise DataValidationError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def scale(self, X):
        """Replace levels by their fitted scores (training-sample standardization)."""
        return apply_scaling(self._levels(X), self.quantifications_)

    def transform(self, X):
        """Component scores of ``X``."""
        return self.scale(X) @ self.components_.T

    def score(self, X, y=None):
        """VAF of the first ``n_components`` on ``X`` scaled and standardized within ``X``."""
        return validation_vaf(self._levels(X), self.quantifications_, self.n_components)
