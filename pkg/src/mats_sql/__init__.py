import logging
from importlib.metadata import PackageNotFoundError, version

from mats_sql.config import RunConfig, load_config
from mats_sql.models import QuestionSample, SqlCandidate
from mats_sql.orpo import orpo_loss
from mats_sql.pipeline import run_benchmark, run_sample
from mats_sql.rlef import run_iteration

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

try:
    __version__ = version("mats-sql")
except PackageNotFoundError:
    # Package is not installed (e.g., during local development)
    __version__ = "unknown"

__all__ = [
    "QuestionSample",
    "RunConfig",
    "SqlCandidate",
    "load_config",
    "orpo_loss",
    "run_benchmark",
    "run_iteration",
    "run_sample",
]
