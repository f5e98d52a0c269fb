"""Shared exception types.

Everything raised on purpose by this package derives from OwahError so
callers can catch one base class at CLI / service boundaries.
"""


class OwahError(Exception):
    """Base class for all deliberate failures."""


class UnsatisfiableConfigError(OwahError):
    """A goal or template combination that can never be realized."""


class IncomparableStatesError(OwahError):
    """Two states whose entity sets differ were diffed or delta-encoded."""


class UnreachableSubgoalError(OwahError):
    """No legal plan exists for the requested goal from the given state."""


class BudgetExceededError(OwahError):
    """A search exceeded its node or simulation budget."""


class IncompatibleVocabularyError(OwahError):
    """States or checkpoints bound to a different predicate vocabulary."""


class InvalidLengthError(OwahError):
    """An episode length that cannot enter the speedup formula."""


class IllegalActionError(OwahError):
    """An action that fails its preconditions was submitted explicitly."""


class SessionNotFoundError(OwahError):
    """Unknown live session id."""


class SessionFinishedError(OwahError):
    """An action was submitted to an episode that already ended."""
