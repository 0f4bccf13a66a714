"""Exception hierarchy shared across the package.

Every error raised by the library derives from :class:`FrailtyGlassoError`
so callers (and the CLI) can map failures to coarse categories: data
validation, numerical trouble, or configuration.
"""

from __future__ import annotations


class FrailtyGlassoError(Exception):
    """Base class for all library errors."""


class ConfigError(FrailtyGlassoError):
    """Invalid configuration value or unparseable config input."""


class DegenerateConfig(ConfigError):
    """Simulation configuration that cannot produce a valid dataset."""


class DataValidationError(FrailtyGlassoError):
    """One or more dataset invariants are violated.

    ``violations`` holds every ``(code, message)`` pair found, so a caller
    sees all problems at once rather than the first.
    """

    def __init__(self, violations: list[tuple[str, str]]):
        self.violations = list(violations)
        lines = "; ".join(f"{code}: {msg}" for code, msg in self.violations)
        super().__init__(lines)

    @property
    def codes(self) -> set[str]:
        return {code for code, _ in self.violations}


class NoEvents(DataValidationError):
    """Every observation is censored; nothing can be fit."""

    def __init__(self, message: str = "dataset contains no uncensored events"):
        super().__init__([("NoEvents", message)])


class TiedEventTimes(DataValidationError):
    """Two uncensored observations share the same follow-up time."""

    def __init__(self, message: str):
        super().__init__([("TiedEventTimes", message)])


class FoldWithoutEvents(DataValidationError):
    """Cross-validation fold assignment left some fold with zero events."""

    def __init__(self, message: str):
        super().__init__([("FoldWithoutEvents", message)])


class DimensionMismatch(DataValidationError):
    """Vector lengths disagree."""

    def __init__(self, message: str):
        super().__init__([("DimensionMismatch", message)])


class NumericalError(FrailtyGlassoError):
    """Base class for numerical failures during evaluation or optimization."""


class NonFiniteResult(NumericalError):
    """An intermediate quantity overflowed or became NaN."""


class ZeroDenominator(NumericalError):
    """A hazard-jump update hit an empty risk set."""


class LineSearchFailed(NumericalError):
    """Armijo backtracking could not find an acceptable step."""


class InvalidLoglikPair(NumericalError):
    """Fitted log-likelihood is materially worse than the null's."""
