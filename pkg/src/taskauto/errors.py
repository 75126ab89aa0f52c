"""Exception and warning types raised across the package."""


class TaskAutoError(Exception):
    """Base class for all package errors."""


class NonPositiveBracket(TaskAutoError, ValueError):
    """The additive loss bracket evaluated to a non-positive number."""


class OutOfRegime(TaskAutoError, ValueError):
    """An input bundle falls outside the supported experimental regime."""


class FitFailed(TaskAutoError, RuntimeError):
    """No restart of the scaling-law fit converged."""


class DegenerateDesign(TaskAutoError, ValueError):
    """An experimental design does not vary every input axis."""


class BaselineNotExceeded(TaskAutoError, ValueError):
    """Model loss is not below the task's no-information baseline."""


class DomainError(TaskAutoError, ValueError):
    """An argument lies outside the domain of a mapping."""


class OutOfRange(TaskAutoError, ValueError):
    """A fraction, count or bound is outside its admissible range."""


class MissingWage(TaskAutoError, ValueError):
    """A wage needed to price labelled data is missing."""


class Infeasible(TaskAutoError, ValueError):
    """A target loss cannot be reached inside the supported regime."""


class NotConverged(TaskAutoError, RuntimeError):
    """An iterative solver stopped before meeting its tolerance."""


class EmptyBins(TaskAutoError, ValueError):
    """A firm-size table has no positive counts."""


class InvalidMaxSize(TaskAutoError, ValueError):
    """The Zipf truncation point does not exceed the open bin's lower edge."""


class MissingSubsector(TaskAutoError, KeyError):
    """An employment share refers to a subsector with no size distribution."""


class ZeroDenominator(TaskAutoError, ZeroDivisionError):
    """An aggregation has no compensation mass to normalise by."""


class ParseError(TaskAutoError, ValueError):
    """A CSV or key-value file could not be parsed.

    Parameters
    ----------
    message : str
        Human readable reason.
    line : int, optional
        1-based line number in the offending file.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class JoinKeyMissing(UserWarning):
    """A source table contributed no rows to a join."""


class ExtrapolationWarning(UserWarning):
    """A loss was evaluated outside the supported regime with clamping."""
