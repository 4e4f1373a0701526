"""Exception types raised across the package."""


class DomainError(ValueError):
    """A parameter lies outside the range where a construction is defined."""


class NormalizationError(ValueError):
    """A state that should be normalized is not; states are never renormalized."""


class PhaseSearchError(RuntimeError):
    """No phase assignment of a baseline protocol reaches perfect resolution."""


class BracketError(RuntimeError):
    """The minimum-time bisection could not bracket a feasible horizon."""
