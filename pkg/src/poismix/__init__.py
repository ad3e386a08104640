"""Gaussian variational estimation and inference for the single-predictor
Poisson random-intercept model.

The package fits the model by maximizing an evidence lower bound with
per-group Gaussian variational posteriors, provides studentized confidence
intervals and Wald tests with the correct asymptotic variances, verifies
everything against an exact-likelihood oracle built on adaptive
Gauss-Hermite quadrature, and ships a Monte-Carlo harness for coverage and
interval-length studies.
"""

__version__ = "0.1.0"

from .errors import (
    AllZeroResponse,
    DegenerateDesign,
    InnerDivergence,
    ModeSearchFailure,
    NegativeCount,
    NonFiniteBound,
    NonFiniteLikelihood,
    NonFiniteValue,
    NonPositiveDefiniteInformation,
    NotConverged,
    PoismixError,
    RateOverflow,
    ShapeMismatch,
    SingularDenominator,
    SingularInformation,
    UnsupportedOrder,
    UsageError,
)
from .ghq import exact_ci, exact_loglik, fit_mle
from .gva import (
    FitOptions,
    fit_gva,
    lower_bound,
    lower_bound_gradient,
    solve_variational,
    stationarity_residuals,
)
from .inference import (
    MgfMoments,
    confidence_intervals,
    estimate_mgf_moments,
    normal_quantile,
    tau_squared_from_moments,
    tau_squared_hat,
    tau_squared_true,
    wald_statistic,
)
from .predictors import PredictorDistribution, mgf, sample_x
from .simulate import replication_seed, simulate_dataset
from .study import (
    LengthComparison,
    StudyConfig,
    compare_lengths,
    length_ratios,
    run_coverage,
)
from .types import (
    CiSet,
    CoverageReport,
    Dataset,
    GvaFit,
    ModelParams,
    ParameterCoverage,
    VariationalParams,
    dataset_from_csv,
    dataset_to_csv,
    validate_dataset,
)

__all__ = [
    "__version__",
    # types
    "ModelParams", "VariationalParams", "Dataset", "GvaFit", "CiSet",
    "ParameterCoverage", "CoverageReport", "validate_dataset",
    "dataset_to_csv", "dataset_from_csv",
    # predictors / simulation
    "PredictorDistribution", "mgf", "sample_x", "simulate_dataset",
    "replication_seed",
    # variational fitting
    "FitOptions", "lower_bound", "lower_bound_gradient", "solve_variational",
    "fit_gva", "stationarity_residuals",
    # inference
    "MgfMoments", "estimate_mgf_moments", "tau_squared_hat",
    "tau_squared_from_moments", "tau_squared_true", "confidence_intervals",
    "wald_statistic", "normal_quantile",
    # exact-likelihood oracle
    "exact_loglik", "fit_mle", "exact_ci",
    # studies
    "StudyConfig", "run_coverage", "compare_lengths", "LengthComparison",
    "length_ratios",
    # errors
    "PoismixError", "ShapeMismatch", "NegativeCount", "NonFiniteValue",
    "RateOverflow", "NonFiniteBound", "InnerDivergence", "NotConverged",
    "DegenerateDesign", "AllZeroResponse", "SingularDenominator",
    "UnsupportedOrder", "ModeSearchFailure", "NonFiniteLikelihood",
    "NonPositiveDefiniteInformation", "SingularInformation", "UsageError",
]
