"""End-to-end orchestration: one sample, and a whole benchmark.

Stage order per sample: schema insight, planner, execution, validation,
fix (with re-execution of fixed queries), selection. Candidate-level work
fans out over ``parallelism`` threads; every merge happens in candidate
order, so results do not depend on scheduling.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence, TypeVar

from tqdm import tqdm

from mats_sql.agents.fixer import fix
from mats_sql.agents.planner import plan_candidates
from mats_sql.agents.prompts import AgentContext
from mats_sql.agents.parsing import normalize_sql
from mats_sql.agents.selector import dedup_candidates, select_best
from mats_sql.agents.validator import validate
from mats_sql.backend.base import Backend
from mats_sql.config import RunConfig
from mats_sql.constants import (
    CONFIG_SNAPSHOT_FILE,
    RESULTS_FILE,
    SUMMARY_FILE,
    TIMINGS_FILE,
    FeedbackKind,
    Origin,
)
from mats_sql.db.executor import execute_sql, order_sensitive_for, responses_match
from mats_sql.db.samples import load_samples
from mats_sql.errors import ConfigError, EmptyPlanError, FixFailedError
from mats_sql.models import ExecutionResponse, Feedback, QuestionSample, SqlCandidate
from mats_sql.pipeline.context import Backends, SchemaStore, build_context, ranker_for
from mats_sql.pipeline.results import (
    BenchmarkSummary,
    CandidateTrace,
    PipelineResult,
    result_line,
    timing_line,
)
from mats_sql.retrieval.ranker import RankerBudget, SchemaRanker

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

STAGES = ("schema_insight", "planner", "execution", "validation", "fix", "selection")


@contextmanager
def _stage(name: str, sample_id: str, timings: dict[str, float]) -> Iterator[None]:
    start = time.perf_counter()
    try:
        yield
    finally:
        seconds = time.perf_counter() - start
        timings[name] = seconds
        logger.info(
            "stage %s done for %s",
            name,
            sample_id,
            extra={"stage": name, "sample_id": sample_id, "seconds": seconds},
        )


def _fan_out(func: Callable[[T], R], items: Sequence[T], parallelism: int) -> list[R]:
    if parallelism <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(func, items))


def _greedy_index(candidates: Sequence[SqlCandidate]) -> int:
    return next((i for i, c in enumerate(candidates) if c.origin == Origin.GREEDY), 0)


def _gold_match(
    sample: QuestionSample,
    db_path: Path,
    final: Optional[ExecutionResponse],
    timeout: float,
) -> Optional[bool]:
    if sample.gold_sql is None:
        return None
    if final is None:
        return False
    gold = execute_sql(db_path, sample.gold_sql, timeout)
    if not gold.ok:
        logger.warning("Gold SQL of %s does not execute: %s", sample.id, gold.status)
    return responses_match(gold, final, order_sensitive_for(sample.gold_sql))


def run_sample(
    sample: QuestionSample,
    config: RunConfig,
    backends: Backends,
    db_root: Optional[Path] = None,
    store: Optional[SchemaStore] = None,
    ranker: Optional[SchemaRanker] = None,
) -> PipelineResult:
    """Run the full agent pipeline for one sample.

    Args:
        sample (QuestionSample): benchmark item.
        config (RunConfig): run knobs (K, T, budgets, timeout, parallelism).
        backends (Backends): one handle per role; selection is required.
        db_root (Optional[Path]): database root, defaults to ``config.db_root``.
        store (Optional[SchemaStore]): shared schema cache.
        ranker (Optional[SchemaRanker]): schema ranker, defaults per config.

    Raises:
        DatabaseNotFoundError: database file missing.
        BackendError: a backend failed.

    Returns:
        PipelineResult: trace of the sample; a sample without any extractable
            candidate is returned with ``error`` set.
    """
    if backends.selection is None:
        raise ConfigError("backends.selection", "no backend configured")
    selection_backend = backends.selection
    store = store or SchemaStore(db_root or config.db_root, config.catalog_cap)
    ranker = ranker or ranker_for(config)
    budget = RankerBudget(
        max_tables=config.max_tables, max_columns_per_table=config.max_columns_per_table
    )
    timings: dict[str, float] = {}
    started = time.perf_counter()

    with _stage("schema_insight", sample.id, timings):
        ctx, stats = build_context(sample, store, ranker, budget, config.top_k_values)

    try:
        with _stage("planner", sample.id, timings):
            candidates = plan_candidates(
                backends.planner,
                ctx,
                config.candidates,
                config.temperature,
                advanced=backends.advanced,
                max_new_tokens=config.max_new_tokens,
                stop=config.stop,
            )
    except EmptyPlanError as e:
        logger.warning("No candidates for %s: %s", sample.id, e)
        timings["total"] = time.perf_counter() - started
        return PipelineResult(
            sample_id=sample.id,
            db_id=sample.db_id,
            schema_stats=stats,
            ex_match=False if sample.gold_sql is not None else None,
            error=f"EmptyPlanError: {e}",
            timings=timings,
        )

    def _execute(candidate: SqlCandidate) -> ExecutionResponse:
        return execute_sql(ctx.db_path, candidate.sql, config.timeout)

    with _stage("execution", sample.id, timings):
        responses = _fan_out(_execute, candidates, config.parallelism)

    def _validate(i: int) -> tuple[Feedback, ...]:
        return tuple(
            validate(
                backends.validator,
                kind,
                ctx,
                candidates[i],
                responses[i],
                max_new_tokens=config.max_new_tokens,
            )
            for kind in (FeedbackKind.SELECTION, FeedbackKind.CONDITION)
        )

    with _stage("validation", sample.id, timings):
        feedbacks = _fan_out(_validate, range(len(candidates)), config.parallelism)

    with _stage("fix", sample.id, timings):
        traces = _fan_out(
            lambda i: _fix_candidate(
                backends, ctx, config, candidates[i], responses[i], feedbacks[i]
            ),
            range(len(candidates)),
            config.parallelism,
        )

    with _stage("selection", sample.id, timings):
        traces, selected, fallback = _select(selection_backend, ctx, config, traces)

    final = traces[selected]
    ex_match = _gold_match(sample, ctx.db_path, final.latest_response, config.timeout)
    timings["total"] = time.perf_counter() - started
    return PipelineResult(
        sample_id=sample.id,
        db_id=sample.db_id,
        schema_stats=stats,
        candidates=tuple(traces),
        selected_index=selected,
        fallback=fallback,
        final_sql=final.latest.sql,
        final_response=final.latest_response,
        ex_match=ex_match,
        timings=timings,
    )


def _fix_candidate(
    backends: Backends,
    ctx: AgentContext,
    config: RunConfig,
    candidate: SqlCandidate,
    response: ExecutionResponse,
    feedbacks: tuple[Feedback, ...],
) -> CandidateTrace:
    trace = CandidateTrace(candidate=candidate, response=response, feedbacks=feedbacks)
    if not any(f.indicates_error for f in feedbacks):
        return trace
    try:
        fixed = fix(
            backends.fix,
            ctx,
            candidate,
            feedbacks,
            response,
            max_new_tokens=config.max_new_tokens,
        )
    except FixFailedError as e:
        logger.info("Keeping original candidate of %s: %s", ctx.sample.id, e)
        return trace.model_copy(update={"fix_error": str(e)})
    fixed_response = execute_sql(ctx.db_path, fixed.sql, config.timeout)
    return trace.model_copy(update={"fixed": fixed, "fixed_response": fixed_response})


def _select(
    selection: Backend,
    ctx: AgentContext,
    config: RunConfig,
    traces: list[CandidateTrace],
) -> tuple[list[CandidateTrace], int, bool]:
    latest = [t.latest for t in traces]
    kept = dedup_candidates(latest)
    first_of: dict[str, int] = {}
    marked = []
    for i, trace in enumerate(traces):
        key = normalize_sql(trace.latest.sql)
        first = first_of.setdefault(key, i)
        marked.append(
            trace if first == i else trace.model_copy(update={"duplicate_of": first})
        )

    choice = select_best(
        selection,
        ctx,
        [latest[i] for i in kept],
        [traces[i].latest_response for i in kept],
        subset_size=config.selection_chunk,
        max_new_tokens=config.max_new_tokens,
    )
    if choice is None:
        greedy = _greedy_index([t.candidate for t in traces])
        logger.info(
            "Selection answered none for %s, using candidate %d", ctx.sample.id, greedy
        )
        return marked, greedy, True
    return marked, kept[choice], False


def _failed_result(sample: QuestionSample, exc: Exception) -> PipelineResult:
    return PipelineResult(
        sample_id=sample.id,
        db_id=sample.db_id,
        ex_match=False if sample.gold_sql is not None else None,
        error=f"{type(exc).__name__}: {exc}",
    )


def run_benchmark(
    config: RunConfig,
    backends: Optional[Backends] = None,
    ranker: Optional[SchemaRanker] = None,
    progress: bool = True,
) -> tuple[list[PipelineResult], BenchmarkSummary]:
    """Run every sample of ``config.dataset`` and persist the outputs.

    Writes config.json, results.jsonl (one line per sample, flushed as soon
    as the sample is done, dataset order), timings.jsonl and summary.json
    into ``config.output_dir``, plus one prompts_<role>.json per scripted
    backend. A sample that raises any exception is logged, recorded with
    its error and never aborts the run.

    Returns:
        tuple[list[PipelineResult], BenchmarkSummary]: results in dataset order
            and the EX summary.
    """
    samples = load_samples(config.dataset)
    backends = backends or Backends.from_config(config)
    ranker = ranker or ranker_for(config)
    store = SchemaStore(config.db_root, config.catalog_cap)
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    config.write_snapshot(output_dir / CONFIG_SNAPSHOT_FILE)

    def _run(sample: QuestionSample) -> PipelineResult:
        try:
            return run_sample(sample, config, backends, store=store, ranker=ranker)
        except Exception as e:
            logger.exception("Sample %s failed", sample.id)
            return _failed_result(sample, e)

    results: list[PipelineResult] = []
    with (
        open(output_dir / RESULTS_FILE, "wt", encoding="utf-8") as results_file,
        open(output_dir / TIMINGS_FILE, "wt", encoding="utf-8") as timings_file,
        ThreadPoolExecutor(max_workers=config.parallelism) as pool,
    ):
        for result in tqdm(
            pool.map(_run, samples),
            total=len(samples),
            desc="samples",
            disable=not progress,
        ):
            results_file.write(result_line(result) + "\n")
            results_file.flush()
            timings_file.write(timing_line(result) + "\n")
            results.append(result)

    summary = BenchmarkSummary.from_results(results)
    with open(output_dir / SUMMARY_FILE, "wt", encoding="utf-8") as f:
        f.write(summary.model_dump_json(indent=2) + "\n")
    backends.write_prompt_manifests(output_dir)
    totals = [r.timings["total"] for r in results if "total" in r.timings]
    logger.info(
        "Benchmark done: %d samples, EX %s, %.2f s/sample",
        summary.total,
        summary.ex_text(),
        sum(totals) / len(totals) if totals else 0.0,
    )
    return results, summary
