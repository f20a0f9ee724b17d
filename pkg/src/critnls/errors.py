"""Exception types raised across the package."""


class CritNLSError(Exception):
    """Base class for all package errors."""


class ResolutionError(CritNLSError, ValueError):
    """A discretisation is too coarse for the requested operation."""


class UndersampledError(CritNLSError, ValueError):
    """Too few samples (coefficients, snapshots, time nodes) to proceed."""


class DomainOverflowError(CritNLSError):
    """Mass would leave the resolved periodic domain."""


class StiffnessError(CritNLSError):
    """Sub-cycling of the pointwise nonlinear flow exceeded its cap."""


class ConfigError(CritNLSError, ValueError):
    """An experiment configuration failed validation."""
