"""Exception types shared across the package."""


class HdqkdError(Exception):
    """Base class for all package errors."""


class UnsupportedOrderError(HdqkdError, ValueError):
    """Fock order above the configured hard cap."""


class NumericalToleranceError(HdqkdError, RuntimeError):
    """A numerical routine could not reach the requested tolerance.

    Carries the tolerance that was actually achieved so callers can decide
    whether the result is still usable.
    """

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class EstimationAbortError(HdqkdError, RuntimeError):
    """Observed statistics are inconsistent with any channel model.

    Mirrors the protocol-level abort during parameter estimation: an
    infeasible estimation problem means the tolerated intervals cannot be
    met and no key should be extracted.
    """


class ConfigError(HdqkdError, ValueError):
    """Invalid or incomplete run configuration."""
