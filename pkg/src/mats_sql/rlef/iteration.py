"""One iteration of preference-pair construction over a dataset.

Per sample with gold SQL:

1. planner actions on the planner prompt, labelled by execution
2. the greedy planner query, executed, is shown to both validators; their
   actions are labelled through the fix agent
3. when the greedy validators flag an error, fix actions on the fix prompt
   are labelled by execution

Pairs are written per agent to ``<output_dir>/iteration_<t>/<agent>.jsonl``
in dataset order. ``iteration_manifest.json`` in ``output_dir`` accumulates
the pair counts of every iteration and the stop recommendation: stop once
the total changes by less than 5% from the previous iteration.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

from pydantic import Field
from tqdm import tqdm

from mats_sql.agents.fixer import error_feedback
from mats_sql.agents.planner import plan_candidates
from mats_sql.agents.prompts import (
    AgentContext,
    fix_prompt,
    planner_prompt,
    validator_prompt,
)
from mats_sql.agents.validator import gated_feedback, validate
from mats_sql.config import RunConfig
from mats_sql.constants import (
    CONFIG_SNAPSHOT_FILE,
    GREEDY_TEMPERATURE,
    MANIFEST_FILE,
    STOP_THRESHOLD,
    AgentKind,
    FeedbackKind,
    Provenance,
)
from mats_sql.db.executor import execute_sql
from mats_sql.db.samples import load_samples
from mats_sql.errors import ConfigError, EmptyPlanError, GoldExecutionError
from mats_sql.models import FrozenModel, QuestionSample
from mats_sql.pipeline.context import Backends, SchemaStore, build_context, ranker_for
from mats_sql.retrieval.ranker import RankerBudget, SchemaRanker
from mats_sql.rlef.pairs import (
    GoldCache,
    PreferencePair,
    build_fix_pairs,
    build_planner_pairs,
    build_validator_pairs,
    emit_pairs,
)
from mats_sql.rlef.sampling import Action, ActionSet, Observation, sample_actions

logger = logging.getLogger(__name__)

PairsByAgent = dict[AgentKind, list[PreferencePair]]


class IterationRecord(FrozenModel):
    iteration: int = Field(ge=1)
    pair_counts: dict[AgentKind, int]
    total: int
    relative_change: Optional[float] = None
    stop: bool = False
    samples: int = 0
    skipped: int = 0


class IterationManifest(FrozenModel):
    iterations: tuple[IterationRecord, ...] = ()

    @classmethod
    def load(cls, path: str | Path) -> "IterationManifest":
        path = Path(path)
        if not path.is_file():
            return cls()
        return cls.model_validate_json(path.read_text(encoding="utf-8"))

    def get(self, iteration: int) -> Optional[IterationRecord]:
        return next((r for r in self.iterations if r.iteration == iteration), None)

    def with_record(self, record: IterationRecord) -> "IterationManifest":
        kept = [r for r in self.iterations if r.iteration != record.iteration]
        return IterationManifest(
            iterations=tuple(sorted([*kept, record], key=lambda r: r.iteration))
        )

    def write(self, path: str | Path) -> None:
        with open(path, "wt", encoding="utf-8") as f:
            f.write(self.model_dump_json(indent=2) + "\n")


def relative_change(previous: int, current: int) -> Optional[float]:
    """|current - previous| / previous; None when growing from zero."""
    if previous == 0:
        return 0.0 if current == 0 else None
    return abs(current - previous) / previous


def should_stop(
    previous: Optional[int], current: int, threshold: float = STOP_THRESHOLD
) -> bool:
    if previous is None:
        return False
    change = relative_change(previous, current)
    return change is not None and change < threshold


def _empty() -> PairsByAgent:
    return {kind: [] for kind in AgentKind if kind != AgentKind.SELECTION}


def sample_pairs(
    sample: QuestionSample,
    ctx: AgentContext,
    config: RunConfig,
    backends: Backends,
    gold_cache: GoldCache,
    iteration: int,
) -> PairsByAgent:
    """Preference pairs of every trained agent for one sample.

    Raises:
        GoldExecutionError: gold SQL does not execute.
    """
    pairs = _empty()
    gold_cache.get(sample, ctx.db_path)
    k, temperature = config.candidates, config.temperature

    def _observe(agent: AgentKind, prompt: str) -> Observation:
        return Observation(
            agent=agent, prompt=prompt, sample_id=sample.id, iteration=iteration
        )

    planner_actions = sample_actions(
        backends.planner,
        backends.advanced,
        _observe(AgentKind.PLANNER, planner_prompt(ctx)),
        k,
        temperature,
        config.max_new_tokens,
    )
    if planner_actions.usable:
        pairs[AgentKind.PLANNER] = build_planner_pairs(
            sample, planner_actions, ctx.db_path, gold_cache
        )
    else:
        logger.info("Skipping planner pairs of %s: too few actions", sample.id)

    try:
        planner = plan_candidates(
            backends.planner,
            ctx,
            1,
            GREEDY_TEMPERATURE,
            max_new_tokens=config.max_new_tokens,
            stop=config.stop,
        )[0]
    except EmptyPlanError as e:
        logger.info("Skipping validator and fix pairs of %s: %s", sample.id, e)
        return pairs
    response = execute_sql(ctx.db_path, planner.sql, config.timeout)

    actions: dict[FeedbackKind, ActionSet] = {}
    gated = gated_feedback(FeedbackKind.SELECTION, planner)
    condition_obs = _observe(
        AgentKind.VALIDATOR_CONDITION,
        validator_prompt(FeedbackKind.CONDITION, ctx, planner.sql, response),
    )
    actions[FeedbackKind.CONDITION] = sample_actions(
        backends.validator, None, condition_obs, k, temperature, config.max_new_tokens
    )
    selection_obs = _observe(
        AgentKind.VALIDATOR_SELECTION,
        validator_prompt(FeedbackKind.SELECTION, ctx, planner.sql, response),
    )
    if gated is not None:
        # gated query: every selection slot holds the pass-through feedback
        actions[FeedbackKind.SELECTION] = ActionSet(
            observation=selection_obs,
            actions=tuple(
                Action(text=gated.raw_text, provenance=Provenance.POLICY)
                for _ in actions[FeedbackKind.CONDITION].actions
            ),
        )
    else:
        actions[FeedbackKind.SELECTION] = sample_actions(
            backends.validator,
            None,
            selection_obs,
            k,
            temperature,
            config.max_new_tokens,
        )

    if all(a.usable for a in actions.values()):
        partition = build_validator_pairs(
            sample,
            ctx,
            actions[FeedbackKind.SELECTION],
            actions[FeedbackKind.CONDITION],
            backends.fix,
            planner,
            gold_cache,
            editor=backends.editor,
            max_new_tokens=config.max_new_tokens,
        )
        for pair in partition.pairs(selection_obs, condition_obs):
            pairs[pair.agent].append(pair)
        if gated is not None:
            pairs[AgentKind.VALIDATOR_SELECTION] = []
    else:
        logger.info("Skipping validator pairs of %s: too few actions", sample.id)

    feedbacks = [
        validate(
            backends.validator, kind, ctx, planner, response, config.max_new_tokens
        )
        for kind in (FeedbackKind.SELECTION, FeedbackKind.CONDITION)
    ]
    errors = error_feedback(feedbacks)
    if not errors:
        return pairs
    fix_actions = sample_actions(
        backends.fix,
        backends.advanced,
        _observe(
            AgentKind.FIX,
            fix_prompt(ctx, planner.sql, response, [f.raw_text for f in errors]),
        ),
        k,
        temperature,
        config.max_new_tokens,
    )
    if fix_actions.usable:
        pairs[AgentKind.FIX] = build_fix_pairs(
            sample, fix_actions, ctx.db_path, gold_cache
        )
    return pairs


def _check(config: RunConfig, samples: list[QuestionSample]) -> None:
    if not any(s.gold_sql for s in samples):
        raise ConfigError("dataset", "no sample carries gold SQL")
    if config.candidates < 2:
        raise ConfigError("candidates", "preference pairs need at least 2 actions")
    if config.temperature == GREEDY_TEMPERATURE:
        raise ConfigError("temperature", "action sampling needs a temperature above 0")


def run_iteration(
    config: RunConfig,
    iteration: int,
    backends: Optional[Backends] = None,
    ranker: Optional[SchemaRanker] = None,
    progress: bool = True,
) -> IterationRecord:
    """Build and write the preference pairs of iteration ``iteration``.

    Samples without gold SQL, or whose gold SQL does not execute, are
    skipped with a log entry, as are samples failing on a backend or
    database error.

    Raises:
        ConfigError: no gold SQL in the dataset, fewer than 2 actions or
            temperature 0, or a trained role without backend.

    Returns:
        IterationRecord: pair counts and stop recommendation, also merged
            into the iteration manifest.
    """
    if iteration < 1:
        raise ValueError("iteration must be at least 1")
    samples = load_samples(config.dataset)
    _check(config, samples)
    backends = backends or Backends.from_config(config, required=())
    if backends.advanced is None:
        logger.warning("No advanced backend configured, sampling policy actions only")
    ranker = ranker or ranker_for(config)
    store = SchemaStore(config.db_root, config.catalog_cap)
    budget = RankerBudget(
        max_tables=config.max_tables, max_columns_per_table=config.max_columns_per_table
    )
    gold_cache = GoldCache(config.timeout)
    output_dir = Path(config.output_dir)
    iteration_dir = output_dir / f"iteration_{iteration}"
    iteration_dir.mkdir(parents=True, exist_ok=True)
    config.write_snapshot(iteration_dir / CONFIG_SNAPSHOT_FILE)

    def _run(sample: QuestionSample) -> Optional[PairsByAgent]:
        if not sample.gold_sql:
            logger.info("Skipping %s: no gold SQL", sample.id)
            return None
        try:
            ctx, _ = build_context(sample, store, ranker, budget, config.top_k_values)
            return sample_pairs(sample, ctx, config, backends, gold_cache, iteration)
        except GoldExecutionError as e:
            logger.warning("Excluding %s: %s", sample.id, e)
        except Exception:
            logger.exception("Excluding %s after an error", sample.id)
        return None

    merged = _empty()
    skipped = 0
    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        for outcome in tqdm(
            pool.map(_run, samples),
            total=len(samples),
            desc=f"iteration {iteration}",
            disable=not progress,
        ):
            if outcome is None:
                skipped += 1
                continue
            for agent, pairs in outcome.items():
                merged[agent].extend(pairs)

    counts = {
        agent: emit_pairs(pairs, iteration_dir / f"{agent}.jsonl")
        for agent, pairs in merged.items()
    }
    total = sum(counts.values())
    backends.write_prompt_manifests(iteration_dir)
    manifest_path = output_dir / MANIFEST_FILE
    manifest = IterationManifest.load(manifest_path)
    previous = manifest.get(iteration - 1)
    previous_total = previous.total if previous else None
    record = IterationRecord(
        iteration=iteration,
        pair_counts=counts,
        total=total,
        relative_change=(
            relative_change(previous_total, total)
            if previous_total is not None
            else None
        ),
        stop=should_stop(previous_total, total),
        samples=len(samples),
        skipped=skipped,
    )
    manifest.with_record(record).write(manifest_path)
    logger.info(
        "Iteration %d: %d pairs (%s), stop=%s",
        iteration,
        total,
        ", ".join(f"{agent}={n}" for agent, n in counts.items()),
        record.stop,
    )
    return record
