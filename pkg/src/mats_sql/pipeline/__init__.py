from mats_sql.pipeline.context import Backends, SchemaStore, build_context
from mats_sql.pipeline.results import (
    BenchmarkSummary,
    CandidateTrace,
    PipelineResult,
    read_results,
)
from mats_sql.pipeline.runner import run_benchmark, run_sample

__all__ = [
    "Backends",
    "BenchmarkSummary",
    "CandidateTrace",
    "PipelineResult",
    "SchemaStore",
    "build_context",
    "read_results",
    "run_benchmark",
    "run_sample",
]
