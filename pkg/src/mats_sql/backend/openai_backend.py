import logging
from typing import Any, Optional

import openai
from openai import OpenAI
from tenacity import (
    Retrying,
    before_sleep_log,
    retry_if_exception_type,
    stop_after_attempt,
    wait_exponential,
)

from mats_sql.backend.base import GenerationRequest, GenerationResult, TokenLogprob
from mats_sql.constants import DEFAULT_BACKEND_TIMEOUT, DEFAULT_RETRIES
from mats_sql.errors import (
    BackendRejectedError,
    BackendReplyError,
    BackendTransportError,
)

logger = logging.getLogger(__name__)

RETRYABLE_ERRORS = (
    openai.APIConnectionError,
    openai.RateLimitError,
    openai.InternalServerError,
)


class OpenAIBackend:
    """Client of an OpenAI-compatible ``/v1/completions`` endpoint (vLLM, TGI, OpenAI).

    Transport failures are retried with exponential backoff; the SDK's own
    retry loop is switched off so the attempt count is ours.
    """

    def __init__(
        self,
        base_url: Optional[str],
        model: str,
        api_key: Optional[str] = None,
        timeout: float = DEFAULT_BACKEND_TIMEOUT,
        retries: int = DEFAULT_RETRIES,
        backoff_min: float = 1.0,
        backoff_max: float = 10.0,
        name: str = "openai",
        client: Optional[Any] = None,
    ) -> None:
        self.name = name
        self.model = model
        self.retries = retries
        self.backoff_min = backoff_min
        self.backoff_max = backoff_max
        self.client = client or OpenAI(
            base_url=base_url,
            api_key=api_key or "EMPTY",
            timeout=timeout,
            max_retries=0,
        )

    def _create(self, request: GenerationRequest) -> Any:
        kwargs: dict[str, Any] = {
            "model": self.model,
            "prompt": request.prompt,
            "n": request.n,
            "temperature": request.temperature,
            "max_tokens": request.max_new_tokens,
        }
        if request.stop:
            kwargs["stop"] = list(request.stop)
        if request.logprobs:
            kwargs["logprobs"] = 1
        return self.client.completions.create(**kwargs)

    def generate(self, request: GenerationRequest) -> GenerationResult:
        retrying = Retrying(
            retry=retry_if_exception_type(RETRYABLE_ERRORS),
            wait=wait_exponential(
                multiplier=self.backoff_min, min=self.backoff_min, max=self.backoff_max
            ),
            stop=stop_after_attempt(self.retries + 1),
            before_sleep=before_sleep_log(logger, logging.WARNING),
            reraise=True,
        )
        try:
            reply = retrying(self._create, request)
        except RETRYABLE_ERRORS as e:
            raise BackendTransportError(
                f"{self.name}: endpoint unreachable after "
                f"{self.retries + 1} attempts: {e}"
            ) from e
        except openai.APIStatusError as e:
            raise BackendRejectedError(
                f"{self.name}: request rejected ({e.status_code}): {e.message}"
            ) from e
        except openai.APIResponseValidationError as e:
            raise BackendReplyError(f"{self.name}: malformed reply: {e}") from e
        return self._parse(reply, request)

    def _parse(self, reply: Any, request: GenerationRequest) -> GenerationResult:
        choices = getattr(reply, "choices", None)
        if not choices:
            raise BackendReplyError(f"{self.name}: reply carries no choices")
        choices = sorted(choices, key=lambda c: c.index)
        texts = []
        logprobs = []
        for choice in choices:
            if not isinstance(choice.text, str):
                raise BackendReplyError(
                    f"{self.name}: choice {choice.index} has no text"
                )
            texts.append(choice.text)
            if request.logprobs:
                logprobs.append(_token_logprobs(choice))
        return GenerationResult(
            completions=tuple(texts),
            token_logprobs=tuple(logprobs) if request.logprobs else None,
        )


def _token_logprobs(choice: Any) -> tuple[TokenLogprob, ...]:
    data = choice.logprobs
    if data is None or data.tokens is None or data.token_logprobs is None:
        raise BackendReplyError(f"choice {choice.index} lacks requested logprobs")
    return tuple(
        TokenLogprob(token=token, logprob=lp)
        for token, lp in zip(data.tokens, data.token_logprobs)
        if lp is not None
    )
