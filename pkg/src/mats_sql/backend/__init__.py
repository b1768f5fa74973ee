from mats_sql.backend.base import (
    Backend,
    GenerationRequest,
    GenerationResult,
    TokenLogprob,
    complete,
    prompt_digest,
    request_key,
    temperature_bucket,
)
from mats_sql.backend.factory import build_backend
from mats_sql.backend.openai_backend import OpenAIBackend
from mats_sql.backend.scripted import ScriptedBackend

__all__ = [
    "Backend",
    "GenerationRequest",
    "GenerationResult",
    "OpenAIBackend",
    "ScriptedBackend",
    "TokenLogprob",
    "build_backend",
    "complete",
    "prompt_digest",
    "request_key",
    "temperature_bucket",
]
