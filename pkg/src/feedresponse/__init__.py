"""Stochastic model of follower response to advocate posts in social feeds."""

from ._backend import BACKEND
from .errors import (ConfigError, DataValidationError, EstimationError,
                     FeedResponseError, ModelDomainError, SeparationError,
                     UndefinedStatisticError, ZeroLikelihoodError)
from .types import (DerivedUserRates, ModelParams, PopulationParams,
                    ResponseDistribution, Stance, UserRecord)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "__version__",
    "ConfigError",
    "DataValidationError",
    "DerivedUserRates",
    "EstimationError",
    "FeedResponseError",
    "ModelDomainError",
    "ModelParams",
    "PopulationParams",
    "ResponseDistribution",
    "SeparationError",
    "Stance",
    "UndefinedStatisticError",
    "UserRecord",
    "ZeroLikelihoodError",
]
