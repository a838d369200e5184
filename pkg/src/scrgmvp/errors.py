"""Exception types shared across the package."""


class ScrgmvpError(Exception):
    """Base class for package errors."""


class ConfigError(ScrgmvpError, ValueError):
    """Invalid model or experiment configuration."""


class DataError(ScrgmvpError, ValueError):
    """Malformed, missing or insufficient input data."""


class DegeneratePrecisionError(ScrgmvpError, ArithmeticError):
    """A precision matrix yields 1'C1 = 0 or a non-finite value."""


class BulkEigenvalueError(ScrgmvpError, ValueError):
    """A sample eigenvalue lies inside the Marchenko-Pastur bulk."""
