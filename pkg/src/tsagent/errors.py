"""Exception types raised across the package."""

from __future__ import annotations


class TSAgentError(Exception):
    """Base class for all package errors."""


# -- series ------------------------------------------------------------------


class FileMissing(TSAgentError, FileNotFoundError):
    pass


class ParseError(TSAgentError, ValueError):
    def __init__(self, row: int, reason: str):
        super().__init__(f"row {row}: {reason}")
        self.row = row
        self.reason = reason


class LabelLengthMismatch(TSAgentError, ValueError):
    pass


class ConstantSeries(TSAgentError, ValueError):
    pass


class EmptySeries(TSAgentError, ValueError):
    pass


class SpanOutOfBounds(TSAgentError, ValueError):
    pass


class SeriesTooShort(TSAgentError, ValueError):
    pass


class WindowTooShort(TSAgentError, ValueError):
    pass


class IntervalOutOfBounds(TSAgentError, ValueError):
    pass


# -- tools -------------------------------------------------------------------


class UnknownTool(TSAgentError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown tool"


class ParamValidation(TSAgentError, ValueError):
    pass


class BackendReplyUnparseable(TSAgentError, ValueError):
    pass


# -- agent protocol ------------------------------------------------------------


class ProtocolError(TSAgentError, ValueError):
    """A reply from an agent role did not follow its output protocol."""


class MissingPlaceholder(ProtocolError):
    def __init__(self, name: str):
        super().__init__(f"missing placeholder {{{name}}}")
        self.name = name


class MissingPlanTag(ProtocolError):
    pass


class NoCallsFound(ProtocolError):
    pass


class MalformedCall(ProtocolError):
    def __init__(self, index: int, reason: str):
        super().__init__(f"call {index}: {reason}")
        self.index = index


class NoJsonArray(ProtocolError):
    pass


class FieldMissing(ProtocolError):
    def __init__(self, index: int, name: str):
        super().__init__(f"verdict {index}: missing field {name!r}")
        self.index = index
        self.name = name


class ConfidenceOutOfRange(ProtocolError):
    def __init__(self, index: int, value: object):
        super().__init__(f"verdict {index}: confidence {value!r} not in 1..3")
        self.index = index


class MalformedVerdict(ProtocolError):
    def __init__(self, index: int, reason: str):
        super().__init__(f"verdict {index}: {reason}")
        self.index = index


class KeyMissing(ProtocolError):
    def __init__(self, name: str):
        super().__init__(f"missing key {name!r}")
        self.name = name


class BadRating(ProtocolError):
    def __init__(self, key: str, value: object):
        super().__init__(f"rating for {key!r} is {value!r}; expected good/acceptable/poor")
        self.key = key


class MalformedReport(ProtocolError):
    pass


# -- backends ----------------------------------------------------------------


class BackendError(TSAgentError):
    pass


class BackendTimeout(BackendError, TimeoutError):
    pass


class HttpError(BackendError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status


class ReplayMiss(BackendError, KeyError):
    def __init__(self, digest: str):
        super().__init__(digest)
        self.digest = digest

    def __str__(self) -> str:
        return f"no recorded reply for digest {self.digest}"


class BackendUnavailable(BackendError):
    pass


# -- workflow ----------------------------------------------------------------


class EpisodeError(TSAgentError):
    """An episode failed; ``trace`` still holds every event up to the failure."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class ToolBudgetExceeded(EpisodeError):
    pass


class RoleFailure(EpisodeError):
    def __init__(self, role: str, reason: str, trace=None):
        super().__init__(f"{role} failed twice: {reason}", trace)
        self.role = role


class TraceCorrupt(TSAgentError, ValueError):
    def __init__(self, index: int, reason: str):
        super().__init__(f"event {index}: {reason}")
        self.index = index


# -- reward / eval -----------------------------------------------------------


class MissingTruth(TSAgentError, ValueError):
    pass


class WindowTruthMismatch(TSAgentError, ValueError):
    pass


class LengthMismatch(TSAgentError, ValueError):
    pass


class ConfigError(TSAgentError, ValueError):
    pass
