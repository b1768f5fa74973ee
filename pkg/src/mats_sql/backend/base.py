"""Generation backend contract shared by every agent."""

import hashlib
import logging
from typing import Optional, Protocol

from pydantic import Field, model_validator

from mats_sql.constants import DEFAULT_MAX_NEW_TOKENS, GREEDY_TEMPERATURE
from mats_sql.errors import BackendReplyError
from mats_sql.models import FrozenModel

logger = logging.getLogger(__name__)


class GenerationRequest(FrozenModel):
    """One completion request; temperature 0 means greedy and implies ``n == 1``."""

    prompt: str
    n: int = Field(default=1, ge=1)
    temperature: float = Field(default=GREEDY_TEMPERATURE, ge=0)
    max_new_tokens: int = Field(default=DEFAULT_MAX_NEW_TOKENS, ge=1)
    stop: Optional[tuple[str, ...]] = None
    logprobs: bool = False

    @model_validator(mode="after")
    def _greedy_single(self) -> "GenerationRequest":
        if self.temperature == GREEDY_TEMPERATURE and self.n != 1:
            raise ValueError("greedy requests ask for exactly one completion")
        return self

    @property
    def greedy(self) -> bool:
        return self.temperature == GREEDY_TEMPERATURE


class TokenLogprob(FrozenModel):
    token: str
    logprob: float


class GenerationResult(FrozenModel):
    completions: tuple[str, ...]
    token_logprobs: Optional[tuple[tuple[TokenLogprob, ...], ...]] = None

    @model_validator(mode="after")
    def _parallel(self) -> "GenerationResult":
        if self.token_logprobs is not None and len(self.token_logprobs) != len(
            self.completions
        ):
            raise ValueError("token_logprobs must be parallel to completions")
        return self


class Backend(Protocol):
    name: str

    def generate(self, request: GenerationRequest) -> GenerationResult: ...


def complete(backend: Backend, request: GenerationRequest) -> GenerationResult:
    """Ask ``backend`` for ``request.n`` completions.

    Raises:
        BackendTransportError: endpoint unreachable after retries.
        BackendRejectedError: request refused.
        BackendReplyError: reply malformed or with the wrong number of completions.
        FixtureMissError: scripted backend has no answer for this request.

    Returns:
        GenerationResult: exactly ``request.n`` completions.
    """
    result = backend.generate(request)
    if len(result.completions) != request.n:
        raise BackendReplyError(
            f"{backend.name} returned {len(result.completions)} completions, "
            f"expected {request.n}"
        )
    logger.debug(
        "%s answered n=%d at T=%s", backend.name, request.n, request.temperature
    )
    return result


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


def temperature_bucket(temperature: float) -> str:
    if temperature == GREEDY_TEMPERATURE:
        return "greedy"
    return f"{temperature:.2f}"


def request_key(request: GenerationRequest) -> str:
    """Lookup key of scripted fixtures: ``<prompt digest>:<n>:<temperature bucket>``."""
    return (
        f"{prompt_digest(request.prompt)}:{request.n}:"
        f"{temperature_bucket(request.temperature)}"
    )
