"""Exception types raised across the package."""


class NumericalError(RuntimeError):
    """A linear-algebra routine failed or produced non-finite output."""


class DomainError(ValueError):
    """An input lies outside the region where an iteration converges."""


class SolverError(NumericalError):
    """A Hessian factor could not be inverted, even after adding the ridge."""


class FitError(ValueError):
    """Not enough usable data for a regression."""


class EstimationError(ValueError):
    """A critical-batch estimate is missing one of its two regimes."""


class ConfigError(ValueError):
    """Experiment config failed to parse or validate."""
