"""Exception hierarchy of mats_sql."""

from typing import Optional

from pydantic import ValidationError


class MatsError(Exception):
    """Base class of all errors raised by mats_sql."""


class ConfigError(MatsError):
    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field

    @classmethod
    def from_validation(cls, exc: ValidationError) -> "ConfigError":
        """Name the first offending field of a pydantic validation error."""
        first = exc.errors()[0]
        field = ".".join(str(x) for x in first["loc"]) or "config"
        return cls(field, first["msg"])


class DatasetError(MatsError):
    def __init__(
        self, message: str, index: Optional[int] = None, field: Optional[str] = None
    ) -> None:
        where = f"record {index}: " if index is not None else ""
        super().__init__(f"{where}{message}")
        self.index = index
        self.field = field


class SchemaError(MatsError):
    """Rendering referenced a column that is not part of the schema."""


class DatabaseNotFoundError(MatsError):
    """Database file does not exist (setup error, not an execution outcome)."""


class ExecutionError(MatsError):
    """A query that had to succeed (timing, gold) did not."""


class GoldExecutionError(ExecutionError):
    """Gold SQL failed to execute; the sample cannot be labelled."""


class BackendError(MatsError):
    pass


class BackendTransportError(BackendError):
    """Endpoint unreachable after the configured retries."""


class BackendReplyError(BackendError):
    """Endpoint answered with something that is not a valid completion reply."""


class BackendRejectedError(BackendError):
    """Endpoint refused the request; retrying will not help."""


class FixtureMissError(BackendError):
    def __init__(self, key: str) -> None:
        super().__init__(f"no scripted response left for key {key}")
        self.key = key


class AgentError(MatsError):
    pass


class EmptyPlanError(AgentError):
    """Planner produced no completion with extractable SQL."""


class FixFailedError(AgentError):
    """Fix agent produced no extractable SQL."""


class OrpoDomainError(MatsError, ValueError):
    """Input outside the domain of the ORPO arithmetic."""
