"""Exception hierarchy shared across the engine.

Every error that can reach a caller derives from AskdbError so the service
layer can map them onto structured problem reports.
"""

from __future__ import annotations


class AskdbError(Exception):
    """Base class; `stage` tags which pipeline stage raised."""

    stage = "internal"


class ConnectionError_(AskdbError):
    stage = "connect"


class ScopeError(AskdbError):
    """Connection scope references a table/column that does not exist."""

    stage = "connect"


class IngestError(AskdbError):
    stage = "ingest"

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"{message} (line {line})")
        self.line = line


class CoercionError(IngestError):
    def __init__(self, message: str, column: str):
        super().__init__(message)
        self.column = column


class SchemaError(AskdbError):
    stage = "connect"


class PolicyError(AskdbError):
    """Write attempt or out-of-scope access through the read-only driver."""

    stage = "execute"


class ExecutionError(AskdbError):
    """The store rejected a statement; carries the store's message."""

    stage = "execute"


class GraphError(AskdbError):
    stage = "train"


class GraphFormatError(GraphError):
    """Corrupt or wrong-version persisted graph file."""


class ValidationError(AskdbError):
    """A user-provided expression or config entry failed validation."""

    stage = "config"


class NoInputError(AskdbError):
    """No relevant tables could be identified for the question."""

    stage = "intent"


class DisconnectedTablesError(AskdbError):
    stage = "intent"

    def __init__(self, message: str, components: list[set[str]] | None = None):
        super().__init__(message)
        self.components = components or []


class GroundingError(AskdbError):
    stage = "ground"

    def __init__(self, message: str, token: str = "", candidates: list[str] | None = None):
        super().__init__(message)
        self.token = token
        self.candidates = candidates or []


class AggregateValidityError(GroundingError):
    pass


class PlanError(AskdbError):
    stage = "plan"


class ReachError(PlanError):
    """A grounded column cannot be reached from the selected join path."""


class ConsolidationError(PlanError):
    """Consolidation rules failed to converge (indicates a rule bug)."""


class DecodeError(AskdbError):
    stage = "decode"


class ExpansionError(AskdbError):
    stage = "decode"

    def __init__(self, message: str, nearest: list[str] | None = None):
        super().__init__(message)
        self.nearest = nearest or []


class AccessDenied(AskdbError):
    stage = "access"

    def __init__(self, message: str, reason: str = "role"):
        super().__init__(message)
        self.reason = reason


class EvalInputError(AskdbError):
    stage = "eval"
