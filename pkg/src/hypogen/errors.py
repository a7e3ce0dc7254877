"""Shared exception types for the hypothesis engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""


class IllegalTransition(EngineError):
    """Raised when a lifecycle event is not applicable to the current state."""

    def __init__(self, state: str, event: str) -> None:
        super().__init__(f"event {event!r} is not legal from state {state!r}")
        self.state = state
        self.event = event


class NonFiniteRating(EngineError):
    """Raised when a rating is NaN or infinite."""


class MissingBinding(EngineError):
    """Raised when a prompt template placeholder has no binding."""

    def __init__(self, name: str) -> None:
        super().__init__(f"missing binding for placeholder {name!r}")
        self.name = name


class UnknownTemplate(EngineError):
    """Raised when a template id is not registered."""


class BackendUnavailable(EngineError):
    """The model backend could not be reached."""


class BackendTimeout(EngineError):
    """The model backend did not answer within the deadline."""


class RateLimited(EngineError):
    """The model backend asked us to slow down."""

    def __init__(self, retry_after: float = 1.0) -> None:
        super().__init__(f"rate limited, retry after {retry_after}s")
        self.retry_after = retry_after


class SourceUnavailable(EngineError):
    """The literature source is not reachable or not configured."""


class UnknownLabel(EngineError):
    """An observation verdict label is outside the known enumeration."""

    def __init__(self, text: str) -> None:
        super().__init__(f"unknown observation label: {text!r}")
        self.text = text


class EmptyCompletion(EngineError):
    """The model returned nothing usable."""


class ScoreUnparseable(EngineError):
    """Review scores could not be extracted or were out of range."""


class EmptyDecomposition(EngineError):
    """Deep verification produced no assumptions."""


class MissingOverview(EngineError):
    """An operation requires a research overview that does not exist yet."""


class MissingDigest(EngineError):
    """Recurrent review requires a tournament digest."""


class DebateUnrecoverable(EngineError):
    """A generation debate exhausted its turns and the fallback also failed."""


class VerdictUnparseable(EngineError):
    """A tournament judge never produced a parseable verdict."""


class InsufficientPopulation(EngineError):
    """Not enough active hypotheses for the requested operation."""


class ParentNotActive(EngineError):
    """An evolution parent is not active in the tournament."""


class OverviewUnparseable(EngineError):
    """The research overview completion had no recognizable structure."""


class TaskFailed(EngineError):
    """A worker task failed; the orchestrator may retry it."""

    def __init__(self, cause: str) -> None:
        super().__init__(cause)
        self.cause = cause


class MissingSession(EngineError):
    """A task referenced a session that does not exist."""


class PersistenceFailure(EngineError):
    """Event log or checkpoint could not be written."""


class RestoreFailure(EngineError):
    """A checkpoint or event-log tail could not be restored."""

    def __init__(self, cause: str) -> None:
        super().__init__(cause)
        self.cause = cause


class SessionTerminal(EngineError):
    """The session has reached a terminal phase and accepts no new work."""


class EmptyInput(EngineError):
    """An evaluation operation received no results."""


class TooFewResults(EngineError):
    """Temporal bucketing needs at least ten results."""
