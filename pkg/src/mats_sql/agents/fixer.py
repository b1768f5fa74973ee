import logging
from typing import Sequence

from mats_sql.agents.parsing import extract_sql
from mats_sql.agents.prompts import AgentContext, editor_prompt, fix_prompt
from mats_sql.backend.base import Backend, GenerationRequest, complete
from mats_sql.constants import DEFAULT_MAX_NEW_TOKENS, Origin, Verdict
from mats_sql.errors import FixFailedError
from mats_sql.models import ExecutionResponse, Feedback, SqlCandidate

logger = logging.getLogger(__name__)


def error_feedback(feedbacks: Sequence[Feedback]) -> list[Feedback]:
    return [f for f in feedbacks if f.indicates_error]


def fix(
    fix_backend: Backend,
    ctx: AgentContext,
    candidate: SqlCandidate,
    feedbacks: Sequence[Feedback],
    response: ExecutionResponse,
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS,
) -> SqlCandidate:
    """Correct ``candidate`` from the error-indicating feedback.

    Only feedback with an incorrect verdict reaches the prompt.

    Raises:
        ValueError: none of ``feedbacks`` indicates an error.
        FixFailedError: the completion holds no SQL.

    Returns:
        SqlCandidate: corrected query with origin ``fixed``.
    """
    errors = error_feedback(feedbacks)
    if not errors:
        raise ValueError("fix needs at least one error-indicating feedback")
    prompt = fix_prompt(ctx, candidate.sql, response, [f.raw_text for f in errors])
    text = complete(
        fix_backend, GenerationRequest(prompt=prompt, max_new_tokens=max_new_tokens)
    ).completions[0]
    extracted = extract_sql(text)
    if extracted is None:
        raise FixFailedError(f"fix completion for {ctx.sample.id} holds no SQL")
    plan, sql = extracted
    logger.debug("Fixed candidate of %s: %s -> %s", ctx.sample.id, candidate.sql, sql)
    return SqlCandidate(plan=plan, sql=sql, origin=Origin.FIXED)


def edit_feedback(
    editor: Backend,
    ctx: AgentContext,
    candidate: SqlCandidate,
    response: ExecutionResponse,
    feedback: Feedback,
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS,
) -> Feedback:
    """Rewrite an error-indicating feedback whose fix did not reach the gold result.

    The rewritten feedback keeps the kind and still indicates an error.
    """
    prompt = editor_prompt(ctx, candidate.sql, response, feedback.raw_text)
    text = complete(
        editor, GenerationRequest(prompt=prompt, max_new_tokens=max_new_tokens)
    ).completions[0]
    return Feedback(
        kind=feedback.kind, raw_text=text.strip(), verdict=Verdict.INCORRECT
    )
