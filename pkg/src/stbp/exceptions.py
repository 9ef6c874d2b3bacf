"""Exception types raised across the package."""

import numpy as np


class DegeneratePointError(ValueError):
    """Raised where a q-exponential quantity is singular (zero radius with q < 2)."""


class NumericalRankError(np.linalg.LinAlgError):
    """Raised when a covariance matrix cannot be factorized even after regularization."""


class UndefinedMetricError(ValueError):
    """Raised when a metric has no finite value, e.g. relative error against a zero truth."""
