"""Exception hierarchy shared by every module."""

from __future__ import annotations


class MlrPermError(Exception):
    """Base class for all package errors."""


class InvalidDataset(MlrPermError, ValueError):
    """A dataset violates a structural precondition (length, constant column...)."""


class DimensionMismatch(InvalidDataset):
    """Input vectors disagree in length."""


class RankDeficient(MlrPermError, ValueError):
    """The design matrix is numerically rank deficient (perfect collinearity)."""


class ZeroStandardError(MlrPermError, ValueError):
    """A coefficient has zero standard error, i.e. the model fits exactly."""


class DegenerateScheme(MlrPermError, RuntimeError):
    """Permutation draws kept failing after the retry cap was exhausted."""


class EmptyDistribution(MlrPermError, ValueError):
    """A null distribution with no draws was passed to a p-value routine."""


class SpaceTooLarge(MlrPermError, ValueError):
    """The permutation space is larger than the requested enumeration cap."""


class SpaceOverflow(MlrPermError, OverflowError):
    """The permutation-space size does not fit a signed 64-bit integer."""


class InvalidStructure(MlrPermError, ValueError):
    """Family labels and treatments do not fit the requested cluster scenario."""


class InvalidRegime(MlrPermError, ValueError):
    """Parameters fall outside the validity region of the correlation approximation."""


class MissingColumn(MlrPermError, KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"column not found in input: {self.name!r}"


class NonNumeric(MlrPermError, ValueError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(row, column, value)
        self.row = row
        self.column = column
        self.value = value

    def __str__(self) -> str:
        return f"row {self.row}, column {self.column!r}: cannot parse {self.value!r} as a number"


class AllRowsDropped(MlrPermError, ValueError):
    """Every row had a missing value in one of the requested columns."""


class ConfigError(MlrPermError, ValueError):
    """A simulation or analysis config could not be parsed."""
