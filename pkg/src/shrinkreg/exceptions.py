"""Exception and warning classes raised by shrinkreg."""

from __future__ import annotations


class ShrinkregError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(ShrinkregError, ValueError):
    """Invalid simulation or experiment configuration.

    ``field`` holds a dotted path to the offending entry when known.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        self.message = message
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class RankDeficiencyError(ShrinkregError, ValueError):
    """The design ``[1 | x | w]`` does not have full column rank.

    ``block`` is ``"x"`` or ``"w"``: the first column block that adds a
    numerically dependent direction.
    """

    def __init__(self, message: str, block: str):
        self.block = block
        super().__init__(message)


class DimensionError(ShrinkregError, ValueError):
    """Array shapes are inconsistent with each other."""


class DominanceWarning(UserWarning):
    """A shrinkage weight lies outside the range with a dominance guarantee."""


class ConditioningWarning(UserWarning):
    """A linear system is close to singular."""
