"""Regression analysis of directional data with the ESAG family.

Submodules
----------
dist
    Covariance construction, density, moments and sampling.
regress
    Datasets, coefficients, null restrictions and maximum likelihood.
inference
    Bootstrap tests (RoC, D, M, LR) and residual goodness of fit.
predict
    Ellipsoidal prediction regions.
sim
    Simulation mechanisms and study drivers.
io, cli
    CSV ingestion, JSON reports and the ``esag`` command.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ContractError,
    DegenerateDataError,
    DegenerateMeanError,
    DimensionTooSmallError,
    EsagError,
    IngestionError,
    ZeroRangeError,
)
from .kernels import BACKEND  # noqa: E402
from .dist import EsagParams, log_density, mnorm_moment, sample  # noqa: E402
from .regress import (  # noqa: E402
    Dataset,
    FitResult,
    NullSpec,
    OptimizerConfig,
    RegressionCoefficients,
    fit,
    predict_params,
    standardize_covariates,
)
from .inference import TestReport, bootstrap_test, bootstrap_tests, gof_T  # noqa: E402
from .predict import PredictionRegion, contains, coverage, quadform_variance, region, regions  # noqa: E402

__all__ = [
    "BACKEND",
    "ContractError",
    "Dataset",
    "DegenerateDataError",
    "DegenerateMeanError",
    "DimensionTooSmallError",
    "EsagError",
    "EsagParams",
    "FitResult",
    "IngestionError",
    "NullSpec",
    "OptimizerConfig",
    "PredictionRegion",
    "RegressionCoefficients",
    "TestReport",
    "ZeroRangeError",
    "bootstrap_test",
    "bootstrap_tests",
    "contains",
    "coverage",
    "fit",
    "gof_T",
    "log_density",
    "mnorm_moment",
    "predict_params",
    "quadform_variance",
    "region",
    "regions",
    "sample",
    "standardize_covariates",
]
