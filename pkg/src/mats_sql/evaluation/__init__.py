from mats_sql.evaluation.metrics import (
    EvalRecord,
    EvalSummary,
    build_eval_records,
    discover_variants,
    execution_accuracy,
    valid_efficiency_score,
)
from mats_sql.evaluation.report import breakdown_report, plot_breakdown, write_breakdown

__all__ = [
    "EvalRecord",
    "EvalSummary",
    "breakdown_report",
    "build_eval_records",
    "discover_variants",
    "execution_accuracy",
    "plot_breakdown",
    "valid_efficiency_score",
    "write_breakdown",
]
