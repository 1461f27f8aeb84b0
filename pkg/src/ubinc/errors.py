"""Exception hierarchy shared by the analysis, simulation and CLI layers."""

from __future__ import annotations


class UbincError(Exception):
    """Base class for all errors raised by this package."""


class CurveError(UbincError, ValueError):
    """A curve or curve-family parameter violates its invariants."""


class DomainError(UbincError, ValueError):
    """A curve was evaluated outside [0, inf)."""


class InstabilityError(UbincError, ArithmeticError):
    """Long-run arrival rate exceeds what the service can sustain.

    ``stage`` names the offending server (node id or role) when known.
    """

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage


class SnrRangeError(UbincError, OverflowError):
    """An SNR-domain moment left the representable floating-point range."""


class QuantileCapError(UbincError, RuntimeError):
    """The delay quantile search exceeded its slot cap."""


class ConfigError(UbincError, ValueError):
    """Invalid scenario configuration. ``errors`` holds one message per problem."""

    def __init__(self, errors: list[str] | str):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class TopologyError(ConfigError):
    """The topology breaks an assignment constraint."""
