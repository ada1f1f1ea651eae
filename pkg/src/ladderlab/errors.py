"""Exception taxonomy shared across the package."""


class LadderError(Exception):
    """Base class for all ladderlab errors."""


class DimensionError(LadderError):
    """Operand shapes do not conform to the operation's rule."""


class NumericError(LadderError):
    """A computation produced non-finite values or diverged."""


class TapeReuseError(LadderError):
    """A tape was asked to run backward more than once."""


class ContractError(LadderError):
    """A documented API precondition was violated."""


class FormatError(LadderError):
    """A binary file does not match its declared format."""


class LengthError(LadderError):
    """A binary payload is shorter than its header promises."""


class ConsistencyError(LadderError):
    """Two artifacts that must agree (e.g. images vs labels) do not."""


class BudgetError(LadderError):
    """A sampling budget exceeds the available population."""


class DegeneracyError(LadderError):
    """An input is degenerate for the requested computation."""


class CollapseError(LadderError):
    """Training ended in a collapsed (near-zero) solution."""


class YieldShortfallError(LadderError):
    """Generation could not reach the requested budget.

    Carries the number of examples that were actually produced.
    """

    def __init__(self, message, achieved):
        super().__init__(message)
        self.achieved = achieved


class ConfigurationError(LadderError):
    """An experiment configuration is unusable."""
