"""Schema insight for one sample and the backend set of a run."""

import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from mats_sql.agents.prompts import AgentContext
from mats_sql.backend.base import Backend
from mats_sql.backend.factory import build_backend
from mats_sql.backend.scripted import ScriptedBackend
from mats_sql.config import RunConfig
from mats_sql.constants import (
    PROMPT_MANIFEST_FILE,
    REQUIRED_ROLES,
    RLEF_ROLES,
    BackendRole,
)
from mats_sql.db.introspect import build_value_catalog, introspect_schema
from mats_sql.db.manager import resolve_db_path
from mats_sql.models import QuestionSample, SchemaSnapshot, ValueCatalog
from mats_sql.pipeline.results import SchemaStats
from mats_sql.retrieval.bm25 import match_values
from mats_sql.retrieval.ranker import (
    LexicalRanker,
    PrecomputedRanker,
    RankerBudget,
    SchemaRanker,
    filter_schema,
)
from mats_sql.schema_prompt import render_schema_prompt

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Backends:
    """One backend handle per agent role.

    Selection is only needed by the pipeline; advanced and editor are optional
    assistants.
    """

    planner: Backend
    validator: Backend
    fix: Backend
    selection: Optional[Backend] = None
    advanced: Optional[Backend] = None
    editor: Optional[Backend] = None

    @classmethod
    def from_config(
        cls, config: RunConfig, required: tuple[BackendRole, ...] = REQUIRED_ROLES
    ) -> "Backends":
        config.require_roles((*RLEF_ROLES, *required))
        handles = {
            role: build_backend(cfg, name=str(role))
            for role, cfg in config.backends.items()
        }
        return cls(
            planner=handles[BackendRole.PLANNER],
            validator=handles[BackendRole.VALIDATOR],
            fix=handles[BackendRole.FIX],
            selection=handles.get(BackendRole.SELECTION),
            advanced=handles.get(BackendRole.ADVANCED),
            editor=handles.get(BackendRole.EDITOR),
        )

    def write_prompt_manifests(self, output_dir: str | Path) -> list[Path]:
        """Write the prompts seen by every scripted backend, one file per role."""
        written = []
        for role in BackendRole:
            backend = getattr(self, role.value, None)
            if isinstance(backend, ScriptedBackend):
                path = Path(output_dir) / PROMPT_MANIFEST_FILE.format(role=role.value)
                backend.write_manifest(path)
                written.append(path)
        return written


@dataclass(frozen=True)
class DatabaseInfo:
    path: Path
    snapshot: SchemaSnapshot
    catalog: ValueCatalog


class SchemaStore:
    """Introspects each database once per run and hands out the cached result."""

    def __init__(self, db_root: str | Path, catalog_cap: int) -> None:
        self.db_root = Path(db_root)
        self.catalog_cap = catalog_cap
        self._cache: dict[str, DatabaseInfo] = {}
        self._lock = threading.Lock()

    def get(self, db_id: str) -> DatabaseInfo:
        with self._lock:
            info = self._cache.get(db_id)
            if info is None:
                path = resolve_db_path(self.db_root, db_id)
                snapshot = introspect_schema(path)
                catalog = build_value_catalog(path, snapshot, self.catalog_cap)
                info = DatabaseInfo(path=path, snapshot=snapshot, catalog=catalog)
                self._cache[db_id] = info
                logger.info(
                    "Introspected %s: %d tables, %d columns",
                    db_id,
                    len(snapshot.tables),
                    snapshot.column_count,
                )
            return info


def ranker_for(config: RunConfig) -> SchemaRanker:
    if config.ranker_scores is not None:
        return PrecomputedRanker(config.ranker_scores)
    return LexicalRanker()


def build_context(
    sample: QuestionSample,
    store: SchemaStore,
    ranker: SchemaRanker,
    budget: RankerBudget,
    top_k_values: int,
) -> tuple[AgentContext, SchemaStats]:
    """Schema insight: match values, rank and prune the schema, render the prompt."""
    info = store.get(sample.db_id)
    matched = match_values(sample.question, info.catalog, k=top_k_values)
    scores = ranker.score(sample.question, info.snapshot, matched, sample_id=sample.id)
    pruned = filter_schema(info.snapshot, scores, budget)
    prompt = render_schema_prompt(pruned, matched.restrict_to(pruned), sample.evidence)
    stats = SchemaStats(
        tables_total=len(info.snapshot.tables),
        columns_total=info.snapshot.column_count,
        tables_kept=len(pruned.tables),
        columns_kept=pruned.column_count,
    )
    return AgentContext(sample=sample, schema_prompt=prompt, db_path=info.path), stats
