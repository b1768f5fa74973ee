"""Action sampling for preference-pair construction.

An action set holds ``K`` completions for one observation: ``K - 1`` drawn
from the policy at temperature ``T`` and one from the assistant backend, or
``K`` policy samples when no assistant is configured. Policy actions come
first.
"""

import logging
from typing import Optional

from pydantic import Field

from mats_sql.backend.base import Backend, GenerationRequest, complete
from mats_sql.constants import (
    DEFAULT_MAX_NEW_TOKENS,
    GREEDY_TEMPERATURE,
    AgentKind,
    Provenance,
)
from mats_sql.errors import BackendError
from mats_sql.models import FrozenModel

logger = logging.getLogger(__name__)

# action sets smaller than this cannot yield a chosen/rejected contrast
MIN_ACTIONS = 2


class Observation(FrozenModel):
    """The prompt exactly as the policy saw it."""

    agent: AgentKind
    prompt: str
    sample_id: str
    iteration: int = Field(default=1, ge=1)


class Action(FrozenModel):
    text: str
    provenance: Provenance


class ActionSet(FrozenModel):
    observation: Observation
    actions: tuple[Action, ...] = ()

    @property
    def texts(self) -> list[str]:
        return [a.text for a in self.actions]

    @property
    def usable(self) -> bool:
        return len(self.actions) >= MIN_ACTIONS

    def provenance_of(self, text: str) -> Provenance:
        return next(
            (a.provenance for a in self.actions if a.text == text), Provenance.POLICY
        )


def sample_actions(
    policy: Backend,
    assistant: Optional[Backend],
    observation: Observation,
    k: int,
    temperature: float,
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS,
) -> ActionSet:
    """Sample the action set of one observation.

    A failing backend contributes no actions; the set is returned partial
    and callers skip sets that are not ``usable``.

    Args:
        policy (Backend): backend of the agent being trained.
        assistant (Optional[Backend]): stronger backend contributing one action.
        observation (Observation): prompt and metadata.
        k (int): action set size.
        temperature (float): policy sampling temperature.
        max_new_tokens (int): generation budget per action.

    Raises:
        ValueError: ``k`` too small, or several policy samples at temperature 0.

    Returns:
        ActionSet: policy actions followed by the assistant action.
    """
    minimum = 2 if assistant is not None else 1
    if k < minimum:
        raise ValueError(f"k must be at least {minimum}")
    n_policy = k - 1 if assistant is not None else k
    if temperature == GREEDY_TEMPERATURE and n_policy > 1:
        raise ValueError("sampling several policy actions needs a temperature above 0")

    actions: list[Action] = []
    try:
        result = complete(
            policy,
            GenerationRequest(
                prompt=observation.prompt,
                n=n_policy,
                temperature=temperature,
                max_new_tokens=max_new_tokens,
            ),
        )
        actions.extend(
            Action(text=t, provenance=Provenance.POLICY) for t in result.completions
        )
    except BackendError as e:
        logger.warning(
            "Policy sampling failed for %s (%s): %s",
            observation.sample_id,
            observation.agent,
            e,
        )
    if assistant is not None:
        try:
            result = complete(
                assistant,
                GenerationRequest(
                    prompt=observation.prompt,
                    temperature=temperature,
                    max_new_tokens=max_new_tokens,
                ),
            )
            actions.append(
                Action(text=result.completions[0], provenance=Provenance.ASSISTANT)
            )
        except BackendError as e:
            logger.warning(
                "Assistant sampling failed for %s (%s): %s",
                observation.sample_id,
                observation.agent,
                e,
            )
    return ActionSet(observation=observation, actions=tuple(actions))
