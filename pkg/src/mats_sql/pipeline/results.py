"""Pipeline result records and the results.jsonl contract.

results.jsonl holds one ``PipelineResult`` per line (``schema_version`` 1)
in dataset order. Wall-clock fields (``duration``, ``timings``) are left
out of that file so reruns with deterministic backends are byte-identical;
they go to timings.jsonl instead.
"""

import json
from pathlib import Path
from typing import Any, Optional

from pydantic import Field

from mats_sql.constants import RESULTS_SCHEMA_VERSION
from mats_sql.models import ExecutionResponse, Feedback, FrozenModel, SqlCandidate

VOLATILE_KEYS = frozenset({"duration", "timings"})


class SchemaStats(FrozenModel):
    tables_total: int = 0
    columns_total: int = 0
    tables_kept: int = 0
    columns_kept: int = 0


class CandidateTrace(FrozenModel):
    """One planner candidate through execution, validation and fix."""

    candidate: SqlCandidate
    response: ExecutionResponse
    feedbacks: tuple[Feedback, ...] = ()
    fixed: Optional[SqlCandidate] = None
    fixed_response: Optional[ExecutionResponse] = None
    fix_error: Optional[str] = None
    duplicate_of: Optional[int] = None

    @property
    def latest(self) -> SqlCandidate:
        return self.fixed or self.candidate

    @property
    def latest_response(self) -> ExecutionResponse:
        return self.fixed_response or self.response


class PipelineResult(FrozenModel):
    schema_version: int = RESULTS_SCHEMA_VERSION
    sample_id: str
    db_id: str
    schema_stats: SchemaStats = SchemaStats()
    candidates: tuple[CandidateTrace, ...] = ()
    selected_index: Optional[int] = None
    fallback: bool = False
    final_sql: Optional[str] = None
    final_response: Optional[ExecutionResponse] = None
    ex_match: Optional[bool] = None
    error: Optional[str] = None
    timings: dict[str, float] = Field(default_factory=dict)


class BenchmarkSummary(FrozenModel):
    """EX is None (reported as n/a) when no sample carries gold SQL."""

    total: int
    with_gold: int
    matches: int
    ex: Optional[float]
    failures: int

    @classmethod
    def from_results(cls, results: list[PipelineResult]) -> "BenchmarkSummary":
        flags = [r.ex_match for r in results if r.ex_match is not None]
        matches = sum(1 for f in flags if f)
        return cls(
            total=len(results),
            with_gold=len(flags),
            matches=matches,
            ex=100.0 * matches / len(flags) if flags else None,
            failures=sum(1 for r in results if r.error is not None),
        )

    def ex_text(self) -> str:
        return "n/a" if self.ex is None else f"{self.ex:.2f}"


def _strip(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _strip(v) for k, v in value.items() if k not in VOLATILE_KEYS}
    if isinstance(value, list):
        return [_strip(v) for v in value]
    return value


def result_line(result: PipelineResult) -> str:
    """Deterministic JSON line of ``result`` for results.jsonl."""
    return json.dumps(_strip(result.model_dump(mode="json")), ensure_ascii=False)


def timing_line(result: PipelineResult) -> str:
    durations = [c.response.duration for c in result.candidates]
    return json.dumps(
        {
            "sample_id": result.sample_id,
            "timings": result.timings,
            "candidate_durations": durations,
        }
    )


def read_results(path: str | Path) -> list[PipelineResult]:
    with open(path, "rt", encoding="utf-8") as f:
        return [PipelineResult.model_validate_json(line) for line in f if line.strip()]
