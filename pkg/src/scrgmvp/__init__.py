"""Spectrally-corrected and regularized GMVP under the spiked covariance model."""

from .errors import BulkEigenvalueError, ConfigError, DataError, DegeneratePrecisionError
from .spiked_model import (
    PortfolioWeights,
    SpikedCovariance,
    SpikeSpec,
    canonical_model,
    oracle_gmvp,
    oracle_risk,
    portfolio_risk,
    reference_model,
)

__version__ = "0.1.0"

__all__ = [
    "BulkEigenvalueError",
    "ConfigError",
    "DataError",
    "DegeneratePrecisionError",
    "PortfolioWeights",
    "SpikeSpec",
    "SpikedCovariance",
    "canonical_model",
    "oracle_gmvp",
    "oracle_risk",
    "portfolio_risk",
    "reference_model",
]
