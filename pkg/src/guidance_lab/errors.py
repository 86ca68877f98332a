"""Exception types raised across the package."""


class GuidanceLabError(Exception):
    """Base class for all package errors."""


class DomainError(GuidanceLabError, ValueError):
    """An argument lies outside the domain of the operation (e.g. t > t_max)."""


class KindMismatchError(GuidanceLabError, ValueError):
    """An operation was called on a schedule or distribution of the wrong kind."""


class DegenerateDensityError(GuidanceLabError, ValueError):
    """A density was requested where the marginal has no Lebesgue density."""


class UnknownClassError(GuidanceLabError, KeyError):
    """A class label is not present in the distribution."""


class UnsupportedDistributionError(GuidanceLabError, ValueError):
    """A check requires a distribution family it was not given."""


class DivergedTrajectoryError(GuidanceLabError, FloatingPointError):
    """A sampler produced a non-finite or runaway state."""

    def __init__(self, step: int, t: float, message: str = ""):
        self.step = step
        self.t = t
        super().__init__(message or f"trajectory diverged at step {step} (t={t:.6g})")


class ConfigError(GuidanceLabError, ValueError):
    """A configuration document failed to parse or validate.

    ``field`` is a dotted path to the offending entry (``guidance.interval``),
    ``line``/``column`` are set for syntax errors.
    """

    def __init__(self, message: str, field: str | None = None,
                 line: int | None = None, column: int | None = None):
        self.field = field
        self.line = line
        self.column = column
        prefix = ""
        if field:
            prefix = f"{field}: "
        elif line is not None:
            prefix = f"line {line}, column {column}: "
        super().__init__(prefix + message)
