"""
Negative binomial INGARCH(1,1) model with time-varying dispersion.

Both the conditional mean and the dispersion follow linear feedback
recursions on the previous count and their own previous values.  The package
covers simulation, constrained conditional maximum likelihood, a bootstrap
test for constant dispersion, rolling forecasts and PIT diagnostics.
"""

__version__ = "0.1.0"

from tvdingarch.errors import (  # noqa: E402
    DegenerateDataError,
    DomainError,
    NumericError,
    SingularMatrixError,
    TruncationError,
)
from tvdingarch.model import ModelParams, CountSeries, LatentPath, simulate, latent_path, init_state  # noqa: E402
from tvdingarch.nbdist import NbParams  # noqa: E402
from tvdingarch.estimate import FitConfig, FitResult, fit  # noqa: E402
from tvdingarch.dispersion_test import TestConfig, TestReport, bootstrap_test  # noqa: E402
from tvdingarch.forecast import ForecastConfig, ForecastTrace, rolling_forecast  # noqa: E402
from tvdingarch.diagnostics import PitHistogram, pit, pearson_residuals  # noqa: E402

__all__ = [
    "__version__",
    "DegenerateDataError",
    "DomainError",
    "NumericError",
    "SingularMatrixError",
    "TruncationError",
    "ModelParams",
    "CountSeries",
    "LatentPath",
    "simulate",
    "latent_path",
    "init_state",
    "NbParams",
    "FitConfig",
    "FitResult",
    "fit",
    "TestConfig",
    "TestReport",
    "bootstrap_test",
    "ForecastConfig",
    "ForecastTrace",
    "rolling_forecast",
    "PitHistogram",
    "pit",
    "pearson_residuals",
]
