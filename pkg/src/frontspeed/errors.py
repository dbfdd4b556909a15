class FrontspeedError(Exception):
    """Base class for all package errors."""


class ParameterError(FrontspeedError, ValueError):
    """Invalid input parameter (out of range, mismatched grids, ...)."""


class ConfigError(FrontspeedError, ValueError):
    """Invalid or unknown configuration entry."""


class SolverError(FrontspeedError, RuntimeError):
    """A numerical solve failed to converge or hit a singular system."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ContractError(FrontspeedError, RuntimeError):
    """An operation was called on data that violates its precondition."""
