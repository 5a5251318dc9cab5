"""Penalized optimal scaling of ordinal variables for principal components analysis."""

__version__ = "0.1.0"

from .data import (
    IndicatorMatrix,
    OrdinalDataMatrix,
    StandardizedMatrix,
    apply_scaling,
    build_indicator,
    load_ordinal_csv,
    standardize_columns,
)
from .estimator import PenalizedOrdinalPCA
from .exceptions import (
    DataValidationError,
    InfeasibleProblemError,
    NotPositiveDefiniteError,
    NumericalError,
    ParseError,
    PenscaleError,
)
from .linalg import PcaSolution, pca, pseudo_responses, thin_svd, vaf
from .qp import QpProblem, QpSolution, kkt_check, solve
from .scaling import (
    LAMBDA_FLOOR,
    AlsConfig,
    FitResult,
    PenaltyConfig,
    Quantification,
    als_fit,
    orient,
    quantification_step,
)
from .select import (
    LAMBDA_INF,
    choose_lambda_delta,
    cross_validate,
    default_lambda_grid,
    scree_table,
    vaf_path,
)
from .sim import SimDesign, generate, replicate_study


__all__ = [
    "__version__",
    "IndicatorMatrix",
    "OrdinalDataMatrix",
    "StandardizedMatrix",
    "apply_scaling",
    "build_indicator",
    "load_ordinal_csv",
    "standardize_columns",
    "PenalizedOrdinalPCA",
    "DataValidationError",
    "InfeasibleProblemError",
    "NotPositiveDefiniteError",
    "NumericalError",
    "ParseError",
    "PenscaleError",
    "PcaSolution",
    "pca",
    "pseudo_responses",
    "thin_svd",
    "vaf",
    "QpProblem",
    "QpSolution",
    "kkt_check",
    "solve",
    "LAMBDA_FLOOR",
    "AlsConfig",
    "FitResult",
    "PenaltyConfig",
    "Quantification",
    "als_fit",
    "orient",
    "quantification_step",
    "LAMBDA_INF",
    "choose_lambda_delta",
    "cross_validate",
    "default_lambda_grid",
    "scree_table",
    "vaf_path",
    "SimDesign",
    "generate",
    "replicate_study",
]
