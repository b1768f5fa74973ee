import logging
from typing import Optional, Sequence

from mats_sql.agents.parsing import normalize_sql, parse_choice
from mats_sql.agents.prompts import AgentContext, selection_prompt
from mats_sql.backend.base import Backend, GenerationRequest, complete
from mats_sql.constants import DEFAULT_MAX_NEW_TOKENS, DEFAULT_SELECTION_CHUNK
from mats_sql.models import ExecutionResponse, SqlCandidate

logger = logging.getLogger(__name__)


def dedup_candidates(candidates: Sequence[SqlCandidate]) -> list[int]:
    """Indices of the first candidate of every distinct normalized query."""
    seen: set[str] = set()
    kept = []
    for i, candidate in enumerate(candidates):
        key = normalize_sql(candidate.sql)
        if key not in seen:
            seen.add(key)
            kept.append(i)
    return kept


def _fallback(chunk: list[int], responses: Sequence[ExecutionResponse]) -> int:
    return next((i for i in chunk if responses[i].ok), chunk[0])


def select_best(
    selection: Backend,
    ctx: AgentContext,
    candidates: Sequence[SqlCandidate],
    responses: Sequence[ExecutionResponse],
    subset_size: int = DEFAULT_SELECTION_CHUNK,
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS,
) -> Optional[int]:
    """Tournament over candidates in chunks of at most ``subset_size``.

    Each round splits the remaining candidates into consecutive chunks and
    asks for the best of every chunk; chunk winners advance until one is
    left. A chunk of one advances without a call, so a round over n
    candidates costs one call per chunk of two or more: ceil(n / subset_size)
    calls, minus one when n leaves a remainder of exactly one. With 10
    candidates and chunks of 5 that is 2 calls, then 1 call for the two
    winners, 3 in total; with 6 candidates it is 1 call (chunks of 5 and 1)
    plus 1 for the final pair. A single candidate costs no call.

    A round in which every chunk answers "none" ends the tournament with
    None. An unparseable answer selects the lowest-index executable
    candidate of its chunk.

    Returns:
        Optional[int]: index into ``candidates``, or None.
    """
    if not candidates or len(candidates) != len(responses):
        raise ValueError("candidates and responses must be aligned and nonempty")
    if subset_size < 2:
        raise ValueError("subset_size must be at least 2")

    remaining = list(range(len(candidates)))
    round_no = 0
    while len(remaining) > 1:
        round_no += 1
        winners = []
        for start in range(0, len(remaining), subset_size):
            chunk = remaining[start : start + subset_size]
            if len(chunk) == 1:
                winners.append(chunk[0])
                continue
            prompt = selection_prompt(
                ctx, [(candidates[i].sql, responses[i]) for i in chunk]
            )
            text = complete(
                selection,
                GenerationRequest(prompt=prompt, max_new_tokens=max_new_tokens),
            ).completions[0]
            try:
                choice = parse_choice(text, len(chunk))
            except ValueError as e:
                winner = _fallback(chunk, responses)
                logger.warning(
                    "Unparseable selection answer for %s (%s), falling back to %d",
                    ctx.sample.id,
                    e,
                    winner,
                )
                winners.append(winner)
                continue
            if choice is not None:
                winners.append(chunk[choice])
        logger.debug("Selection round %d of %s: %s", round_no, ctx.sample.id, winners)
        if not winners:
            return None
        remaining = winners
    return remaining[0]
