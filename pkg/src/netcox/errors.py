"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2, data
ingestion problems exit 3, numerical failures exit 4.
"""


class NetcoxError(Exception):
    """Base class for all package errors."""


class DomainError(NetcoxError, ValueError):
    """Arguments outside the documented domain (bad pair, time, index)."""


class ConfigurationError(NetcoxError):
    """Inconsistent or incomplete configuration."""


class DataError(NetcoxError):
    """Malformed or unusable input data."""


class SimulationError(NetcoxError):
    """A simulator produced or encountered an invalid state."""


class NumericError(NetcoxError):
    """Base class for estimation and test failures."""


class NoDataInWindow(NumericError):
    """A localized fit was requested where there is no exposure at all."""

    def __init__(self, t0, h):
        self.t0 = t0
        self.h = h
        super().__init__(f"no active exposure in window [{t0 - h}, {t0 + h}]")


class FitError(NumericError):
    """Newton iteration failed; carries the last iterate for diagnosis."""

    def __init__(self, message, last_theta=None, grad_norm=None, iterations=None):
        self.last_theta = last_theta
        self.grad_norm = grad_norm
        self.iterations = iterations
        super().__init__(message)


class DegenerateVariance(NumericError):
    """The estimated limiting variance is not positive."""


class TestError(NumericError):
    """The constancy test could not be evaluated."""


class InstanceTooLarge(NetcoxError):
    """A deliberately small-scale diagnostic was asked to run at scale."""
