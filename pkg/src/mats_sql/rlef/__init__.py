from mats_sql.rlef.iteration import (
    IterationManifest,
    IterationRecord,
    run_iteration,
    should_stop,
)
from mats_sql.rlef.pairs import (
    GoldCache,
    PreferencePair,
    ValidatorPartition,
    build_fix_pairs,
    build_planner_pairs,
    build_validator_pairs,
    emit_pairs,
    read_pairs,
)
from mats_sql.rlef.sampling import ActionSet, Observation, sample_actions

__all__ = [
    "ActionSet",
    "GoldCache",
    "IterationManifest",
    "IterationRecord",
    "Observation",
    "PreferencePair",
    "ValidatorPartition",
    "build_fix_pairs",
    "build_planner_pairs",
    "build_validator_pairs",
    "emit_pairs",
    "read_pairs",
    "run_iteration",
    "sample_actions",
    "should_stop",
]
