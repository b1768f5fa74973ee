"""Execution accuracy (EX), test-suite accuracy (TS) and valid efficiency score (VES).

All three are percentages over evaluation records and None (reported as
n/a) when there is nothing to score.

* EX: a prediction counts when it executes to the gold result.
* TS: a prediction counts when it matches gold on every variant database
  of its sample. A variant on which gold itself fails removes the sample
  from the denominator; a missing variant file fails the sample.
* VES: mean over samples of ``t_gold / t_pred`` for EX matches, 0 otherwise.
  No clipping or square root is applied.
"""

import logging
import time
from functools import partial
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from mats_sql.constants import DEFAULT_TIMEOUT, DEFAULT_VES_REPEATS
from mats_sql.db.executor import (
    execute_sql,
    order_sensitive_for,
    responses_match,
    time_execution,
)
from mats_sql.db.manager import resolve_db_path
from mats_sql.db.traits import SqlTraits, classify_sql
from mats_sql.errors import DatasetError, ExecutionError
from mats_sql.models import ExecutionResponse, FrozenModel, QuestionSample
from mats_sql.pipeline.results import PipelineResult

logger = logging.getLogger(__name__)

Timer = Callable[[Path, str], float]


class EvalRecord(FrozenModel):
    """Gold and predicted query of one sample, executed on its database."""

    sample_id: str
    db_id: str
    db_path: Path
    gold_sql: str
    predicted_sql: Optional[str] = None
    gold_response: ExecutionResponse
    predicted_response: Optional[ExecutionResponse] = None
    gold_duration: Optional[float] = None
    predicted_duration: Optional[float] = None
    traits: SqlTraits = SqlTraits()
    difficulty: Optional[str] = None

    @property
    def order_sensitive(self) -> bool:
        return order_sensitive_for(self.gold_sql)

    @property
    def match(self) -> bool:
        if self.predicted_response is None:
            return False
        return responses_match(
            self.gold_response, self.predicted_response, self.order_sensitive
        )


def _duration(response: Optional[ExecutionResponse]) -> Optional[float]:
    return response.duration if response is not None and response.ok else None


def build_eval_records(
    results: Sequence[PipelineResult],
    samples: Sequence[QuestionSample],
    db_root: str | Path,
    timeout: float = DEFAULT_TIMEOUT,
) -> list[EvalRecord]:
    """Re-execute gold and predicted SQL of every sample with gold SQL.

    Raises:
        DatasetError: result ids and dataset ids differ; lists the orphans.
        DatabaseNotFoundError: a database file is missing.

    Returns:
        list[EvalRecord]: records in dataset order.
    """
    by_id = {r.sample_id: r for r in results}
    dataset_ids = {s.id for s in samples}
    orphans = sorted(set(by_id) - dataset_ids) + sorted(dataset_ids - set(by_id))
    if orphans:
        raise DatasetError(
            f"results and dataset disagree on {len(orphans)} sample id(s): "
            + ", ".join(orphans)
        )
    records = []
    for sample in samples:
        if sample.gold_sql is None:
            logger.info("Not evaluating %s: no gold SQL", sample.id)
            continue
        result = by_id[sample.id]
        db_path = resolve_db_path(db_root, sample.db_id)
        gold = execute_sql(db_path, sample.gold_sql, timeout)
        if not gold.ok:
            logger.warning(
                "Gold SQL of %s does not execute: %s", sample.id, gold.status
            )
        predicted = (
            execute_sql(db_path, result.final_sql, timeout)
            if result.final_sql is not None
            else None
        )
        records.append(
            EvalRecord(
                sample_id=sample.id,
                db_id=sample.db_id,
                db_path=db_path,
                gold_sql=sample.gold_sql,
                predicted_sql=result.final_sql,
                gold_response=gold,
                predicted_response=predicted,
                gold_duration=_duration(gold),
                predicted_duration=_duration(predicted),
                traits=classify_sql(sample.gold_sql),
                difficulty=sample.difficulty,
            )
        )
    return records


def _percent(scores: Sequence[float]) -> Optional[float]:
    return 100.0 * sum(scores) / len(scores) if scores else None


def execution_accuracy(records: Sequence[EvalRecord]) -> Optional[float]:
    return _percent([1.0 if r.match else 0.0 for r in records])


def discover_variants(
    variants_root: str | Path, records: Sequence[EvalRecord]
) -> dict[str, list[Path]]:
    """Variant databases per sample: every ``*.sqlite`` under ``<root>/<db_id>/``."""
    root = Path(variants_root)
    return {
        r.sample_id: sorted((root / r.db_id).glob("*.sqlite")) for r in records
    }


def test_suite_accuracy(
    records: Sequence[EvalRecord],
    variants: Mapping[str, Sequence[Path]],
    timeout: float = DEFAULT_TIMEOUT,
) -> Optional[float]:
    """Percentage of samples whose prediction matches gold on every variant."""
    scores = []
    for record in records:
        paths = variants.get(record.sample_id) or []
        if not paths:
            logger.warning(
                "Sample %s has no variant databases, counted as failed",
                record.sample_id,
            )
            scores.append(0.0)
            continue
        passed, excluded = record.predicted_sql is not None, False
        for path in paths:
            if not Path(path).is_file():
                logger.warning("Variant %s of %s is missing", path, record.sample_id)
                passed = False
                break
            gold = execute_sql(path, record.gold_sql, timeout)
            if not gold.ok:
                logger.warning(
                    "Gold SQL of %s fails on variant %s, excluding the sample",
                    record.sample_id,
                    path,
                )
                excluded = True
                break
            if passed and record.predicted_sql is not None:
                predicted = execute_sql(path, record.predicted_sql, timeout)
                passed = responses_match(gold, predicted, record.order_sensitive)
        if not excluded:
            scores.append(1.0 if passed else 0.0)
    return _percent(scores)


def ves_ratio(gold_seconds: float, predicted_seconds: float) -> float:
    """``t_gold / t_pred`` with zero durations raised to one timer tick."""
    tick = time.get_clock_info("perf_counter").resolution
    return max(gold_seconds, tick) / max(predicted_seconds, tick)


def ves_scores(
    records: Sequence[EvalRecord],
    repeats: int = DEFAULT_VES_REPEATS,
    timeout: float = DEFAULT_TIMEOUT,
    timer: Optional[Timer] = None,
) -> list[float]:
    """Per-sample efficiency scores; timing runs are sequential."""
    timer = timer or partial(_timed, repeats=repeats, timeout=timeout)
    scores = []
    for record in records:
        if not record.match or record.predicted_sql is None:
            scores.append(0.0)
            continue
        try:
            t_gold = timer(record.db_path, record.gold_sql)
            t_pred = timer(record.db_path, record.predicted_sql)
        except ExecutionError as e:
            logger.warning("Timing of %s failed, scoring 0: %s", record.sample_id, e)
            scores.append(0.0)
            continue
        scores.append(ves_ratio(t_gold, t_pred))
    return scores


def _timed(db_path: Path, sql: str, repeats: int, timeout: float) -> float:
    return time_execution(db_path, sql, repeats=repeats, timeout=timeout)


def valid_efficiency_score(
    records: Sequence[EvalRecord],
    repeats: int = DEFAULT_VES_REPEATS,
    timeout: float = DEFAULT_TIMEOUT,
    timer: Optional[Timer] = None,
) -> Optional[float]:
    return _percent(ves_scores(records, repeats, timeout, timer))


class EvalSummary(FrozenModel):
    total: int
    ex: Optional[float]
    ts: Optional[float] = None
    ves: Optional[float] = None
