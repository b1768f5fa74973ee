"""Basic constants."""

import os
from enum import StrEnum
from pathlib import Path

PROJECT_NAME = "mats_sql"
HOME = str(Path.home())
PROJECT_FOLDER = os.path.join(HOME, f".{PROJECT_NAME}")
RUNS_FOLDER = os.path.join(PROJECT_FOLDER, "runs")

# versions of the public file and prompt contracts
TEMPLATE_VERSION = "v1"
RESULTS_SCHEMA_VERSION = 1

# pipeline defaults (K, T and k_val follow the published setup)
DEFAULT_CANDIDATES = 10
DEFAULT_TEMPERATURE = 1.0
DEFAULT_TOP_K_VALUES = 2
DEFAULT_SELECTION_CHUNK = 5
DEFAULT_MAX_TABLES = 6
DEFAULT_MAX_COLUMNS_PER_TABLE = 10
DEFAULT_TIMEOUT = 30.0
DEFAULT_CATALOG_CAP = 2000
DEFAULT_MAX_NEW_TOKENS = 1024
DEFAULT_PARALLELISM = 1

# backend defaults
DEFAULT_BACKEND_TIMEOUT = 120.0
DEFAULT_RETRIES = 3
GREEDY_TEMPERATURE = 0.0

# retrieval
BM25_K1 = 1.2
BM25_B = 0.75

# prompts
PROMPT_MAX_ROWS = 20
PROMPT_MAX_COLUMNS = 10
ELLIPSIS = "..."

# comparison / timing
REAL_TOLERANCE = 1e-6
DEFAULT_VES_REPEATS = 3

# preference optimisation
DEFAULT_ORPO_LAMBDA = 0.5
LIKELIHOOD_EPSILON = 1e-12
STOP_THRESHOLD = 0.05

# output file names
RESULTS_FILE = "results.jsonl"
SUMMARY_FILE = "summary.json"
TIMINGS_FILE = "timings.jsonl"
CONFIG_SNAPSHOT_FILE = "config.json"
LOG_FILE = "run.log.jsonl"
MANIFEST_FILE = "iteration_manifest.json"
BREAKDOWN_TSV = "breakdown.tsv"
BREAKDOWN_JSON = "breakdown.json"
METRICS_FILE = "metrics.json"
PROMPT_MANIFEST_FILE = "prompts_{role}.json"


class Origin(StrEnum):
    GREEDY = "greedy"
    SAMPLED = "sampled"
    ADVANCED = "advanced"
    FIXED = "fixed"


class Status(StrEnum):
    OK = "ok"
    SYNTAX_ERROR = "syntax_error"
    TIMEOUT = "timeout"


class FeedbackKind(StrEnum):
    SELECTION = "selection"
    CONDITION = "condition"


class Verdict(StrEnum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    UNPARSEABLE = "unparseable"


class AgentKind(StrEnum):
    PLANNER = "planner"
    VALIDATOR_SELECTION = "validator_selection"
    VALIDATOR_CONDITION = "validator_condition"
    FIX = "fix"
    SELECTION = "selection"


class Provenance(StrEnum):
    POLICY = "policy-sampled"
    ASSISTANT = "assistant"


class BackendRole(StrEnum):
    PLANNER = "planner"
    VALIDATOR = "validator"
    FIX = "fix"
    SELECTION = "selection"
    ADVANCED = "advanced"
    EDITOR = "editor"


REQUIRED_ROLES = (
    BackendRole.PLANNER,
    BackendRole.VALIDATOR,
    BackendRole.FIX,
    BackendRole.SELECTION,
)
RLEF_ROLES = (BackendRole.PLANNER, BackendRole.VALIDATOR, BackendRole.FIX)

# operations that let the selection validator pass a query without a model call
GATED_TRAITS = (
    "uses_min",
    "uses_max",
    "uses_count",
    "uses_avg",
    "uses_sum",
    "uses_divide",
    "uses_case_when",
)
