"""Latent-factor simulation design with shape-specific discretization.

Five normal factors with variances 6, 5, 4, 3, 2 load on disjoint blocks
of 6, 5, 4, 3 and 2 variables. Each block is cut into five levels with its
own scoring shape: V, S, linear, square root and quadratic.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .data import OrdinalDataMatrix
from .exceptions import DataValidationError, PenscaleError
from .scaling import AlsConfig, PenaltyConfig, als_fit, orient

__all__ = [
    "SHAPES",
    "SimDesign",
    "SimReplicateSummary",
    "block_loadings",
    "shape_cutpoints",
    "discretize",
    "generate",
    "replicate_study",
]

logger = logging.getLogger(__name__)

SHAPES = ("V", "S", "linear", "sqrt", "quadratic")
_GRID = np.array([-1.5, -0.5, 0.5, 1.5])
V_CUTPOINTS = (0.5, 1.5)


def _default_shapes():
    return ("V",) * 6 + ("S",) * 5 + ("linear",) * 4 + ("sqrt",) * 3 + ("quadratic",) * 2


@dataclass(frozen=True)
class SimDesign:
    n: int = 500
    tau2: float = 0.2
    factor_variances: tuple = (6.0, 5.0, 4.0, 3.0, 2.0)
    shape_map: tuple = field(default_factory=_default_shapes)
    seed: int = 0

    def __post_init__(self):
        sizes = [7 - r for r in range(1, len(self.factor_variances) + 1)]
        if sum(sizes) != len(self.shape_map):
            raise DataValidationError(f"block sizes {sizes} do not cover {len(self.shape_map)} variables")
        unknown = set(self.shape_map) - set(SHAPES)
        if unknown:
            raise DataValidationError(f"unknown shapes {sorted(unknown)}")
        if self.n < 2 or self.tau2 < 0:
            raise DataValidationError("need n >= 2 and tau2 >= 0")

    @property
    def p(self):
        return len(self.shape_map)

    @property
    def m(self):
        return len(self.factor_variances)

    @property
    def noise_sd(self):
        return float(np.sqrt(self.tau2))

    def to_dict(self):
        d = asdict(self)
        d["cutpoint_grid"] = _GRID.tolist()
        d["v_cutpoints_sd_units"] = list(V_CUTPOINTS)
        d["shape_transforms"] = {
            "S": "1.5*tanh(1.5*t)/tanh(2.25)",
            "linear": "t",
            "sqrt": "sqrt((t+2)/4), rescaled to [-1.5, 1.5]",
            "quadratic": "((t+2)/4)**2, rescaled to [-1.5, 1.5]",
        }
        return d


@dataclass(frozen=True)
class SimReplicateSummary:
    """Per (variable, level) mean and sd of oriented scores over replications."""

    lam: float
    mean_theta: np.ndarray
    sd_theta: np.ndarray
    replications: int
    failures: int = 0


def block_loadings(m=5):
    """p x m loadings with blocks of length ``7 - r`` and entries ``1/sqrt(7 - r)``."""
    sizes = [7 - r for r in range(1, m + 1)]
    A = np.zeros((sum(sizes), m))
    start = 0
    for r, size in enumerate(sizes):
        A[start:start + size, r] = 1.0 / np.sqrt(size)
        start += size
    return A


def _rescale(v):
    return -1.5 + 3.0 * (v - v.min()) / (v.max() - v.min())


def shape_cutpoints(shape):
    """Cutpoints in standard-deviation units for a monotone shape, or (zeta1, zeta2) for V."""
    if shape == "V":
        return np.array(V_CUTPOINTS)
    if shape == "linear":
        return _GRID.copy()
    if shape == "S":
        return 1.5 * np.tanh(1.5 * _GRID) / np.tanh(2.25)
    s = (_GRID + 2.0) / 4.0
    if shape == "sqrt":
        return _rescale(np.sqrt(s))
    if shape == "quadratic":
        return _rescale(s ** 2)
    raise DataValidationError(f"unknown shape {shape!r}")


def discretize(column, shape, cutpoints, rng=None):
    """Cut a latent column into levels 1..5.

    Monotone shapes: ``level = 1 + #{cutpoints below value}``. V shape with
    cutpoints (zeta1, zeta2): below zeta1 gives level 3, inside gives 2 or 4,
    above zeta2 gives 1 or 5, each with probability 1/2.
    """
    x = np.asarray(column, dtype=float)
    cut = np.asarray(cutpoints, dtype=float)
    if np.any(np.diff(cut) < 0):
        raise DataValidationError("cutpoints must be sorted")
    if shape != "V":
        if cut.size != 4:
            raise DataValidationError(f"{shape} shape needs 4 cutpoints")
        return 1 + np.searchsorted(cut, x, side="left").astype(np.int64)
    if cut.size != 2:
        raise DataValidationError("V shape needs 2 cutpoints")
    rng = np.random.default_rng(rng)
    coin = rng.random(x.size) < 0.5
    out = np.full(x.size, 3, dtype=np.int64)
    mid = (x >= cut[0]) & (x <= cut[1])
    high = x > cut[1]
    out[mid] = np.where(coin[mid], 2, 4)
    out[high] = np.where(coin[high], 1, 5)
    return out


def generate(design, seed=None):
    """Draw one data set; returns the ordinal matrix and the latent factors."""
    rng = np.random.default_rng(design.seed if seed is None else seed)
    A = block_loadings(design.m)
    Y = rng.normal(size=(design.n, design.m)) * np.sqrt(design.factor_variances)
    X = Y @ A.T + design.noise_sd * rng.normal(size=(design.n, design.p))
    levels = np.empty(X.shape, dtype=np.int64)
    for j, shape in enumerate(design.shape_map):
        col = X[:, j]
        cut = col.mean() + col.std(ddof=1) * shape_cutpoints(shape)
        levels[:, j] = discretize(col, shape, cut, rng)
    names = [f"V{j + 1}" for j in range(design.p)]
    data = OrdinalDataMatrix(levels, level_counts=[5] * design.p, variable_names=names, _require_n_gt_p=False)
    return data, Y


def _one_replication(design, r, lambdas, config, monotone):
    try:
        data, _ = generate(design, seed=design.seed + r)
    except PenscaleError as exc:
        logger.warning("replication %d: data generation failed: %s", r, exc)
        return [None] * len(lambdas)
    out = []
    for lam in lambdas:
        try:
            fit = als_fit(data, PenaltyConfig.for_data(data, lam, monotone), config)
        except (PenscaleError, np.linalg.LinAlgError) as exc:
            logger.warning("replication %d, lambda=%g failed: %s", r, lam, exc)
            out.append(None)
            continue
        rows = []
        for j, q in enumerate(fit.quantifications):
            if q.monotone:
                # the constraint already fixes the direction
                rows.append(q.theta)
                continue
            rule = "convex" if design.shape_map[j] == "V" else "trend"
            rows.append(orient(q, rule=rule).theta)
        out.append(np.array(rows))
    return out


def replicate_study(design, lambdas, config=None, reps=100, monotone=False, n_jobs=1):
    """Repeat generate/fit/orient ``reps`` times for every lambda.

    Replication ``r`` uses seed ``design.seed + r``; the same data set is fit
    at every lambda. Failed fits are excluded and counted.

    Returns
    -------
    list of SimReplicateSummary, one per lambda
    """
    if reps < 2:
        raise DataValidationError("need at least 2 replications for a standard deviation")
    config = config or AlsConfig(m=design.m)
    lambdas = [float(l) for l in lambdas]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_one_replication)(design, r, lambdas, config, monotone) for r in range(reps)
    )
    summaries = []
    for i, lam in enumerate(lambdas):
        thetas = [res[i] for res in results if res[i] is not None]
        failures = reps - len(thetas)
        if len(thetas) < 2:
            raise DataValidationError(f"lambda={lam}: fewer than 2 successful replications")
        stack = np.stack(thetas)
        summaries.append(SimReplicateSummary(
            lam=lam,
            mean_theta=stack.mean(axis=0),
            sd_theta=stack.std(axis=0, ddof=1),
            replications=len(thetas),
            failures=failures,
        ))
    return summaries
