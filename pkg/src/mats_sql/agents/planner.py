import logging
from typing import Optional

from mats_sql.agents.parsing import extract_sql
from mats_sql.agents.prompts import AgentContext, planner_prompt
from mats_sql.backend.base import Backend, GenerationRequest, complete
from mats_sql.constants import DEFAULT_MAX_NEW_TOKENS, GREEDY_TEMPERATURE, Origin
from mats_sql.errors import EmptyPlanError
from mats_sql.models import SqlCandidate

logger = logging.getLogger(__name__)


def plan_candidates(
    planner: Backend,
    ctx: AgentContext,
    k: int,
    temperature: float,
    advanced: Optional[Backend] = None,
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS,
    stop: Optional[tuple[str, ...]] = None,
) -> list[SqlCandidate]:
    """Generate up to ``k`` candidate queries for one sample.

    One greedy request yields the first candidate, one sampled request at
    ``temperature`` yields the other ``k - 1``. With an advanced backend the
    last sampled slot is taken by one completion of that backend instead.
    At temperature 0 only the greedy request is sent, since the sampled
    slots would repeat it. Completions without extractable SQL are dropped.

    Args:
        planner (Backend): planner backend.
        ctx (AgentContext): sample, schema prompt and database.
        k (int): number of candidates, >= 1.
        temperature (float): sampling temperature of the non-greedy request.
        advanced (Optional[Backend]): stronger assistant planner.
        max_new_tokens (int): generation budget per completion.
        stop (Optional[tuple[str, ...]]): stop strings.

    Raises:
        EmptyPlanError: no completion held SQL.

    Returns:
        list[SqlCandidate]: greedy candidate first, then sampled, then advanced.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    prompt = planner_prompt(ctx)

    def _request(n: int, t: float) -> GenerationRequest:
        return GenerationRequest(
            prompt=prompt, n=n, temperature=t, max_new_tokens=max_new_tokens, stop=stop
        )

    completions: list[tuple[str, Origin, float]] = []
    greedy = complete(planner, _request(1, GREEDY_TEMPERATURE))
    completions.append((greedy.completions[0], Origin.GREEDY, GREEDY_TEMPERATURE))

    use_advanced = advanced is not None and k >= 2
    sampled = k - 1 - (1 if use_advanced else 0)
    if sampled > 0 and temperature > GREEDY_TEMPERATURE:
        result = complete(planner, _request(sampled, temperature))
        completions.extend(
            (text, Origin.SAMPLED, temperature) for text in result.completions
        )
    if use_advanced:
        assert advanced is not None
        result = complete(advanced, _request(1, temperature))
        completions.append((result.completions[0], Origin.ADVANCED, temperature))

    candidates = []
    for i, (text, origin, t) in enumerate(completions):
        extracted = extract_sql(text)
        if extracted is None:
            logger.info(
                "Dropping planner completion %d of %s: no SQL", i, ctx.sample.id
            )
            continue
        plan, sql = extracted
        candidates.append(
            SqlCandidate(plan=plan, sql=sql, origin=origin, temperature=t)
        )
    if not candidates:
        raise EmptyPlanError(f"no planner completion for {ctx.sample.id} contained SQL")
    return candidates
