"""Chosen/rejected preference pairs labelled by execution against gold SQL.

Planner and fix actions are labelled directly: an action is chosen when its
SQL reproduces the gold result. A sample with no chosen action yields no
pairs; a sample whose actions are all chosen is paired against the empty
string.

Validator actions are labelled in two ways. When the planner query is
already correct, a feedback is chosen if it says so. Independently, every
aligned (selection, condition) feedback pair is handed to the fix agent and
both are chosen if the fixed query reproduces the gold result. The second
label wins when both apply and disagree. Validator pairs never use the
empty string.
"""

import logging
import threading
from pathlib import Path
from typing import Iterable, Optional, Sequence

from pydantic import model_validator

from mats_sql.agents.fixer import edit_feedback, error_feedback, fix
from mats_sql.agents.parsing import extract_sql, parse_verdict
from mats_sql.agents.prompts import AgentContext
from mats_sql.backend.base import Backend
from mats_sql.constants import (
    DEFAULT_MAX_NEW_TOKENS,
    DEFAULT_TIMEOUT,
    AgentKind,
    FeedbackKind,
    Verdict,
)
from mats_sql.db.executor import execute_sql, order_sensitive_for, responses_match
from mats_sql.errors import FixFailedError, GoldExecutionError
from mats_sql.models import (
    ExecutionResponse,
    Feedback,
    FrozenModel,
    QuestionSample,
    SqlCandidate,
)
from mats_sql.rlef.sampling import ActionSet, Observation

logger = logging.getLogger(__name__)


class PreferencePair(FrozenModel):
    agent: AgentKind
    prompt: str
    chosen: str
    rejected: str
    sample_id: str
    iteration: int

    @model_validator(mode="after")
    def _distinct(self) -> "PreferencePair":
        if self.chosen == self.rejected:
            raise ValueError("chosen and rejected must differ")
        return self


class Partition(FrozenModel):
    chosen: tuple[str, ...] = ()
    rejected: tuple[str, ...] = ()


class ValidatorPartition(FrozenModel):
    """Chosen and rejected feedback texts per validator kind."""

    chosen_selection: tuple[str, ...] = ()
    chosen_condition: tuple[str, ...] = ()
    rejected_selection: tuple[str, ...] = ()
    rejected_condition: tuple[str, ...] = ()
    assistant_chosen: tuple[str, ...] = ()
    conflicts: int = 0

    def selection(self) -> Partition:
        return Partition(chosen=self.chosen_selection, rejected=self.rejected_selection)

    def condition(self) -> Partition:
        return Partition(chosen=self.chosen_condition, rejected=self.rejected_condition)

    def pairs(
        self, selection: Observation, condition: Observation
    ) -> list[PreferencePair]:
        return cross_pairs(selection, self.selection(), allow_empty_rejected=False) + (
            cross_pairs(condition, self.condition(), allow_empty_rejected=False)
        )


class GoldCache:
    """Executes each sample's gold SQL once per iteration."""

    def __init__(self, timeout: float = DEFAULT_TIMEOUT) -> None:
        self.timeout = timeout
        self._cache: dict[str, ExecutionResponse] = {}
        self._lock = threading.Lock()

    def get(self, sample: QuestionSample, db_path: Path) -> ExecutionResponse:
        """Gold response of ``sample``.

        Raises:
            ValueError: the sample has no gold SQL.
            GoldExecutionError: the gold SQL does not execute.
        """
        if sample.gold_sql is None:
            raise ValueError(f"sample {sample.id} has no gold SQL")
        with self._lock:
            response = self._cache.get(sample.id)
            if response is None:
                response = execute_sql(db_path, sample.gold_sql, self.timeout)
                self._cache[sample.id] = response
        if not response.ok:
            raise GoldExecutionError(
                f"gold SQL of {sample.id} failed with {response.status}: "
                f"{response.error_text or ''}"
            )
        return response


def _distinct(texts: Iterable[str]) -> list[str]:
    return list(dict.fromkeys(texts))


def _reproduces_gold(
    sql: Optional[str],
    db_path: Path,
    gold: ExecutionResponse,
    order_sensitive: bool,
    timeout: float,
) -> bool:
    if sql is None:
        return False
    return responses_match(gold, execute_sql(db_path, sql, timeout), order_sensitive)


def _completion_sql(text: str) -> Optional[str]:
    extracted = extract_sql(text)
    return extracted[1] if extracted else None


def partition_actions(
    texts: Sequence[str],
    db_path: Path,
    gold: ExecutionResponse,
    order_sensitive: bool,
    timeout: float = DEFAULT_TIMEOUT,
) -> Partition:
    """Split distinct SQL-bearing completions by whether they reproduce ``gold``."""
    chosen, rejected = [], []
    for text in _distinct(texts):
        sql = _completion_sql(text)
        if _reproduces_gold(sql, db_path, gold, order_sensitive, timeout):
            chosen.append(text)
        else:
            rejected.append(text)
    return Partition(chosen=tuple(chosen), rejected=tuple(rejected))


def cross_pairs(
    observation: Observation, partition: Partition, allow_empty_rejected: bool
) -> list[PreferencePair]:
    """All (chosen, rejected) combinations, chosen-major.

    Without a chosen text there are no pairs. Without a rejected text the
    empty string stands in when ``allow_empty_rejected`` is set.
    """
    if not partition.chosen:
        return []
    rejected = partition.rejected
    if not rejected and allow_empty_rejected:
        rejected = ("",)
    return [
        PreferencePair(
            agent=observation.agent,
            prompt=observation.prompt,
            chosen=c,
            rejected=r,
            sample_id=observation.sample_id,
            iteration=observation.iteration,
        )
        for c in partition.chosen
        for r in rejected
        if c != r
    ]


def _execution_pairs(
    sample: QuestionSample,
    actions: ActionSet,
    db_path: Path,
    gold_cache: GoldCache,
) -> list[PreferencePair]:
    gold = gold_cache.get(sample, db_path)
    order_sensitive = order_sensitive_for(sample.gold_sql or "")
    partition = partition_actions(
        actions.texts, db_path, gold, order_sensitive, gold_cache.timeout
    )
    # chosen texts must still reproduce gold when the pairs are written
    confirmed = tuple(
        c
        for c in partition.chosen
        if _reproduces_gold(
            _completion_sql(c), db_path, gold, order_sensitive, gold_cache.timeout
        )
    )
    if len(confirmed) != len(partition.chosen):
        logger.warning(
            "%d chosen %s action(s) of %s no longer match gold on recheck",
            len(partition.chosen) - len(confirmed),
            actions.observation.agent,
            sample.id,
        )
    partition = Partition(chosen=confirmed, rejected=partition.rejected)
    pairs = cross_pairs(actions.observation, partition, allow_empty_rejected=True)
    logger.debug(
        "%s pairs of %s: |C|=%d |R|=%d -> %d",
        actions.observation.agent,
        sample.id,
        len(partition.chosen),
        len(partition.rejected),
        len(pairs),
    )
    return pairs


def build_planner_pairs(
    sample: QuestionSample, actions: ActionSet, db_path: Path, gold_cache: GoldCache
) -> list[PreferencePair]:
    """Preference pairs of planner completions.

    Raises:
        GoldExecutionError: gold SQL does not execute; the sample cannot be labelled.
    """
    return _execution_pairs(sample, actions, db_path, gold_cache)


def build_fix_pairs(
    sample: QuestionSample, actions: ActionSet, db_path: Path, gold_cache: GoldCache
) -> list[PreferencePair]:
    """Preference pairs of fix completions; the observation carries the feedback.

    Raises:
        GoldExecutionError: gold SQL does not execute; the sample cannot be labelled.
    """
    return _execution_pairs(sample, actions, db_path, gold_cache)


def _fix_reproduces_gold(
    fix_backend: Backend,
    ctx: AgentContext,
    planner: SqlCandidate,
    planner_response: ExecutionResponse,
    feedbacks: Sequence[Feedback],
    gold: ExecutionResponse,
    order_sensitive: bool,
    timeout: float,
    max_new_tokens: int,
) -> bool:
    try:
        fixed = fix(
            fix_backend,
            ctx,
            planner,
            feedbacks,
            planner_response,
            max_new_tokens=max_new_tokens,
        )
    except FixFailedError as e:
        logger.info("Fix produced no SQL for %s: %s", ctx.sample.id, e)
        return False
    return _reproduces_gold(fixed.sql, ctx.db_path, gold, order_sensitive, timeout)


def _split(
    texts: Sequence[str], labels: dict[int, bool], extra_chosen: Sequence[str] = ()
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    chosen = _distinct(
        [texts[i] for i in sorted(labels) if labels[i]] + list(extra_chosen)
    )
    rejected = _distinct([texts[i] for i in sorted(labels) if not labels[i]])
    ambiguous = set(chosen) & set(rejected)
    if ambiguous:
        logger.debug("Dropping %d feedback text(s) labelled both ways", len(ambiguous))
    return (
        tuple(t for t in chosen if t not in ambiguous),
        tuple(t for t in rejected if t not in ambiguous),
    )


def build_validator_pairs(
    sample: QuestionSample,
    ctx: AgentContext,
    actions_s: ActionSet,
    actions_c: ActionSet,
    fix_backend: Backend,
    planner: SqlCandidate,
    gold_cache: GoldCache,
    editor: Optional[Backend] = None,
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS,
) -> ValidatorPartition:
    """Label selection and condition feedback of one planner query.

    Args:
        sample (QuestionSample): sample with gold SQL.
        ctx (AgentContext): context the validators saw; its database is used.
        actions_s (ActionSet): selection-validator completions.
        actions_c (ActionSet): condition-validator completions, aligned by index.
        fix_backend (Backend): fix agent of the previous iteration.
        planner (SqlCandidate): the planner query under validation.
        gold_cache (GoldCache): gold responses of the iteration.
        editor (Optional[Backend]): feedback editor; rewrites error feedback
            whose fix failed and retries the fix once.
        max_new_tokens (int): generation budget of fix and editor calls.

    Raises:
        GoldExecutionError: gold SQL does not execute.

    Returns:
        ValidatorPartition: chosen and rejected feedback texts per kind.
    """
    gold = gold_cache.get(sample, ctx.db_path)
    timeout = gold_cache.timeout
    order_sensitive = order_sensitive_for(sample.gold_sql or "")
    planner_response = execute_sql(ctx.db_path, planner.sql, timeout)
    planner_correct = responses_match(gold, planner_response, order_sensitive)
    texts_s, texts_c = actions_s.texts, actions_c.texts

    labels_s: dict[int, bool] = {}
    labels_c: dict[int, bool] = {}
    if planner_correct:
        for texts, labels in ((texts_s, labels_s), (texts_c, labels_c)):
            for i, text in enumerate(texts):
                labels[i] = parse_verdict(text) == Verdict.CORRECT

    if len(texts_s) != len(texts_c):
        logger.warning(
            "Validator action sets of %s differ in size (%d, %d); pairing the first %d",
            sample.id,
            len(texts_s),
            len(texts_c),
            min(len(texts_s), len(texts_c)),
        )

    conflicts = 0
    assistant_chosen: dict[FeedbackKind, list[str]] = {k: [] for k in FeedbackKind}
    for i, (a_s, a_c) in enumerate(zip(texts_s, texts_c)):
        feedbacks = [
            Feedback(
                kind=FeedbackKind.SELECTION, raw_text=a_s, verdict=parse_verdict(a_s)
            ),
            Feedback(
                kind=FeedbackKind.CONDITION, raw_text=a_c, verdict=parse_verdict(a_c)
            ),
        ]
        errors = error_feedback(feedbacks)
        if not errors:
            outcome = planner_correct
        else:
            outcome = _fix_reproduces_gold(
                fix_backend,
                ctx,
                planner,
                planner_response,
                errors,
                gold,
                order_sensitive,
                timeout,
                max_new_tokens,
            )
            if not outcome and editor is not None:
                edited = [
                    edit_feedback(
                        editor, ctx, planner, planner_response, f, max_new_tokens
                    )
                    for f in errors
                ]
                if _fix_reproduces_gold(
                    fix_backend,
                    ctx,
                    planner,
                    planner_response,
                    edited,
                    gold,
                    order_sensitive,
                    timeout,
                    max_new_tokens,
                ):
                    for f in edited:
                        assistant_chosen[f.kind].append(f.raw_text)
        for labels in (labels_s, labels_c):
            if i in labels and labels[i] != outcome:
                conflicts += 1
                logger.info(
                    "Feedback %d of %s labelled %s by verdict and %s by fix; "
                    "keeping the fix label",
                    i,
                    sample.id,
                    labels[i],
                    outcome,
                )
            labels[i] = outcome

    chosen_s, rejected_s = _split(
        texts_s, labels_s, assistant_chosen[FeedbackKind.SELECTION]
    )
    chosen_c, rejected_c = _split(
        texts_c, labels_c, assistant_chosen[FeedbackKind.CONDITION]
    )
    return ValidatorPartition(
        chosen_selection=chosen_s,
        chosen_condition=chosen_c,
        rejected_selection=rejected_s,
        rejected_condition=rejected_c,
        assistant_chosen=tuple(
            _distinct(
                assistant_chosen[FeedbackKind.SELECTION]
                + assistant_chosen[FeedbackKind.CONDITION]
            )
        ),
        conflicts=conflicts,
    )


def emit_pairs(pairs: Sequence[PreferencePair], path: str | Path) -> int:
    """Write ``pairs`` as JSON lines.

    Field order: agent, prompt, chosen, rejected, sample_id, iteration.

    Returns:
        int: number of lines written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wt", encoding="utf-8") as f:
        for pair in pairs:
            f.write(pair.model_dump_json() + "\n")
    logger.info("Wrote %d pairs to %s", len(pairs), path)
    return len(pairs)


def read_pairs(path: str | Path) -> list[PreferencePair]:
    with open(path, "rt", encoding="utf-8") as f:
        return [PreferencePair.model_validate_json(line) for line in f if line.strip()]
