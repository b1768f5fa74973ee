import logging

from mats_sql.agents.parsing import parse_verdict
from mats_sql.agents.prompts import AgentContext, validator_prompt
from mats_sql.backend.base import Backend, GenerationRequest, complete
from mats_sql.constants import DEFAULT_MAX_NEW_TOKENS, FeedbackKind, Verdict
from mats_sql.db.traits import classify_sql
from mats_sql.models import ExecutionResponse, Feedback, SqlCandidate

logger = logging.getLogger(__name__)


def gated_feedback(kind: FeedbackKind, candidate: SqlCandidate) -> Feedback | None:
    """Feedback issued without a model call, or None when the validator must be asked.

    Only the selection validator is gated: queries using an aggregate, a
    division or CASE WHEN pass it unchecked.
    """
    if kind != FeedbackKind.SELECTION:
        return None
    gated = classify_sql(candidate.sql).gated_operations()
    if not gated:
        return None
    return Feedback(
        kind=kind,
        raw_text=f"Not checked, query uses {', '.join(gated)}.\nThe SQL is correct.",
        verdict=Verdict.CORRECT,
    )


def validate(
    validator: Backend,
    kind: FeedbackKind,
    ctx: AgentContext,
    candidate: SqlCandidate,
    response: ExecutionResponse,
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS,
) -> Feedback:
    """Ask the selection or condition validator about one executed candidate.

    Args:
        validator (Backend): validator backend.
        kind (FeedbackKind): selection or condition.
        ctx (AgentContext): sample context.
        candidate (SqlCandidate): the query.
        response (ExecutionResponse): its execution response.
        max_new_tokens (int): generation budget.

    Returns:
        Feedback: completion text and parsed verdict.
    """
    gated = gated_feedback(kind, candidate)
    if gated is not None:
        return gated
    prompt = validator_prompt(kind, ctx, candidate.sql, response)
    text = complete(
        validator, GenerationRequest(prompt=prompt, max_new_tokens=max_new_tokens)
    ).completions[0]
    verdict = parse_verdict(text)
    if verdict == Verdict.UNPARSEABLE:
        logger.warning(
            "Unparseable %s verdict for %s, treating it as correct", kind, ctx.sample.id
        )
    return Feedback(kind=kind, raw_text=text, verdict=verdict)
