"""Schema element ranking and pruning.

A ranker assigns a score to every table and column; ``filter_schema`` then
keeps the best ones within a ``RankerBudget``. ``LexicalRanker`` is the
built-in token-overlap ranker, ``PrecomputedRanker`` reads scores produced
by an external model from a JSON file::

    {"singer": 0.9, "singer.name": 0.7, ...}

or, per sample, ``{"<sample id>": {"singer": 0.9, ...}, ...}``.
"""

import json
import logging
from pathlib import Path
from typing import Optional, Protocol

from pydantic import Field

from mats_sql.constants import DEFAULT_MAX_COLUMNS_PER_TABLE, DEFAULT_MAX_TABLES
from mats_sql.models import (
    ForeignKey,
    FrozenModel,
    MatchedValues,
    SchemaSnapshot,
    TableDef,
)
from mats_sql.retrieval.terms import tokenize

logger = logging.getLogger(__name__)


class RankerBudget(FrozenModel):
    max_tables: int = Field(default=DEFAULT_MAX_TABLES, ge=1)
    max_columns_per_table: int = Field(default=DEFAULT_MAX_COLUMNS_PER_TABLE, ge=1)


class ElementScores(FrozenModel):
    """Scores keyed by ``table`` and ``table.column``; missing elements score 0."""

    tables: dict[str, float] = Field(default_factory=dict)
    columns: dict[str, float] = Field(default_factory=dict)

    def table(self, name: str) -> float:
        return self.tables.get(name, 0.0)

    def column(self, table: str, column: str) -> float:
        return self.columns.get(f"{table}.{column}", 0.0)


class SchemaRanker(Protocol):
    def score(
        self,
        question: str,
        snapshot: SchemaSnapshot,
        matched: MatchedValues,
        sample_id: Optional[str] = None,
    ) -> ElementScores: ...


def _overlap(question_terms: set[str], element_terms: set[str]) -> float:
    if not element_terms:
        return 0.0
    return len(question_terms & element_terms) / len(element_terms)


def rank_elements(
    question: str, snapshot: SchemaSnapshot, matched: MatchedValues
) -> ElementScores:
    """Score tables and columns by normalized token overlap with the question.

    An element's terms are its name tokens plus the tokens of the matched
    values with a positive score (a table collects those of its columns).
    Score = |question terms & element terms| / |element terms|.
    """
    question_terms = set(tokenize(question))
    matched_terms: dict[tuple[str, str], set[str]] = {}
    for match in matched.columns:
        key = (match.column.table.casefold(), match.column.column.casefold())
        matched_terms[key] = {
            term for v in match.values if v.score > 0 for term in tokenize(v.value)
        }

    tables: dict[str, float] = {}
    columns: dict[str, float] = {}
    for table in snapshot.tables:
        table_terms = set(tokenize(table.name))
        for column in table.columns:
            value_terms = matched_terms.get(
                (table.name.casefold(), column.name.casefold()), set()
            )
            column_terms = set(tokenize(column.name)) | value_terms
            columns[f"{table.name}.{column.name}"] = _overlap(
                question_terms, column_terms
            )
            table_terms |= value_terms
        tables[table.name] = _overlap(question_terms, table_terms)
    return ElementScores(tables=tables, columns=columns)


class LexicalRanker:
    def score(
        self,
        question: str,
        snapshot: SchemaSnapshot,
        matched: MatchedValues,
        sample_id: Optional[str] = None,
    ) -> ElementScores:
        return rank_elements(question, snapshot, matched)


class PrecomputedRanker:
    """Scores computed outside this package (e.g. by a schema-linking encoder)."""

    def __init__(self, path: str | Path) -> None:
        with open(path, "rt", encoding="utf-8") as f:
            data = json.load(f)
        if not isinstance(data, dict):
            raise ValueError(f"{path} must contain a JSON object")
        self._per_sample = bool(data) and all(
            isinstance(v, dict) for v in data.values()
        )
        self._data = data
        logger.info("Loaded precomputed schema scores from %s", path)

    def _scores_for(self, sample_id: Optional[str]) -> dict[str, float]:
        if not self._per_sample:
            return self._data
        if sample_id is None or sample_id not in self._data:
            logger.warning("No precomputed scores for sample %s", sample_id)
            return {}
        return self._data[sample_id]

    def score(
        self,
        question: str,
        snapshot: SchemaSnapshot,
        matched: MatchedValues,
        sample_id: Optional[str] = None,
    ) -> ElementScores:
        raw = self._scores_for(sample_id)
        tables = {t.name: float(raw.get(t.name, 0.0)) for t in snapshot.tables}
        columns = {
            f"{t.name}.{c.name}": float(raw.get(f"{t.name}.{c.name}", 0.0))
            for t in snapshot.tables
            for c in t.columns
        }
        return ElementScores(tables=tables, columns=columns)


def _top(scores: list[float], n: int) -> set[int]:
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return set(order[:n])


def filter_schema(
    snapshot: SchemaSnapshot,
    scores: ElementScores,
    budget: RankerBudget = RankerBudget(),
) -> SchemaSnapshot:
    """Prune ``snapshot`` to the best-scored tables and columns.

    Keeps the top ``max_tables`` tables and, per kept table, the top
    ``max_columns_per_table`` columns (ties toward original order) plus
    every primary-key and foreign-key column. Relative order is preserved;
    foreign keys lose their entry once an endpoint is dropped.

    Args:
        snapshot (SchemaSnapshot): full schema.
        scores (ElementScores): ranker output.
        budget (RankerBudget): pruning budget.

    Returns:
        SchemaSnapshot: sub-schema of ``snapshot``.
    """
    kept_tables = _top(
        [scores.table(t.name) for t in snapshot.tables], budget.max_tables
    )
    fk_columns = {
        (ref.table.casefold(), ref.column.casefold())
        for fk in snapshot.foreign_keys
        for ref in fk.endpoints
    }

    tables: list[TableDef] = []
    for i, table in enumerate(snapshot.tables):
        if i not in kept_tables:
            continue
        column_scores = [scores.column(table.name, c.name) for c in table.columns]
        keep = _top(column_scores, budget.max_columns_per_table)
        columns = tuple(
            c
            for j, c in enumerate(table.columns)
            if j in keep
            or c.is_primary_key
            or (table.name.casefold(), c.name.casefold()) in fk_columns
        )
        tables.append(TableDef(name=table.name, columns=columns))

    pruned = SchemaSnapshot(tables=tuple(tables))
    foreign_keys: list[ForeignKey] = [
        fk
        for fk in snapshot.foreign_keys
        if all(pruned.has_column(ref.table, ref.column) for ref in fk.endpoints)
    ]
    logger.debug(
        "Pruned schema from %d to %d tables, %d to %d columns",
        len(snapshot.tables),
        len(tables),
        snapshot.column_count,
        pruned.column_count,
    )
    return SchemaSnapshot(tables=tuple(tables), foreign_keys=tuple(foreign_keys))
