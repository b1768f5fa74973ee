"""Okapi BM25 value matching.

Every catalog value of a column is one document; the column's value list is
the corpus. For a query term ``t``::

    idf(t)   = ln(1 + (N - df + 0.5) / (df + 0.5))
    score    = sum_t idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avg_len))
"""

import logging
import math
from collections import Counter
from typing import Mapping, Optional, Sequence

from pydantic import Field, model_validator

from mats_sql.constants import BM25_B, BM25_K1, DEFAULT_TOP_K_VALUES
from mats_sql.models import (
    ColumnCatalog,
    ColumnMatch,
    FrozenModel,
    MatchedValue,
    MatchedValues,
    ValueCatalog,
)
from mats_sql.retrieval.terms import tokenize

logger = logging.getLogger(__name__)


class CorpusStats(FrozenModel):
    """Collection statistics of one BM25 corpus.

    Attributes:
        doc_count (int): N, number of documents.
        avg_doc_len (float): mean document length in terms; 1.0 for corpora
            whose documents are all empty.
        doc_freq (dict[str, int]): number of documents containing each term.
    """

    doc_count: int = Field(ge=1)
    avg_doc_len: float = Field(gt=0)
    doc_freq: dict[str, int] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _df_bounded(self) -> "CorpusStats":
        for term, df in self.doc_freq.items():
            if not 1 <= df <= self.doc_count:
                raise ValueError(f"document frequency of {term!r} out of range")
        return self

    @classmethod
    def from_documents(cls, documents: Sequence[Sequence[str]]) -> "CorpusStats":
        if not documents:
            raise ValueError("a corpus needs at least one document")
        doc_freq: Counter[str] = Counter()
        for doc in documents:
            doc_freq.update(set(doc))
        total = sum(len(doc) for doc in documents)
        return cls(
            doc_count=len(documents),
            avg_doc_len=total / len(documents) if total else 1.0,
            doc_freq=dict(doc_freq),
        )

    def idf(self, term: str) -> float:
        df = self.doc_freq.get(term, 0)
        return math.log(1 + (self.doc_count - df + 0.5) / (df + 0.5))


def bm25_score(
    query_terms: Sequence[str],
    doc_terms: Sequence[str],
    stats: CorpusStats,
    k1: float = BM25_K1,
    b: float = BM25_B,
) -> float:
    """Okapi BM25 relevance of one document for a tokenized query.

    Args:
        query_terms (Sequence[str]): query tokens; an empty query scores 0.
        doc_terms (Sequence[str]): document tokens.
        stats (CorpusStats): statistics of the corpus holding the document.
        k1 (float): term-frequency saturation, > 0.
        b (float): length normalization in [0, 1].

    Returns:
        float: non-negative score.
    """
    if k1 <= 0:
        raise ValueError("k1 must be positive")
    if not 0 <= b <= 1:
        raise ValueError("b must lie in [0, 1]")
    frequencies = Counter(doc_terms)
    length_norm = k1 * (1 - b + b * len(doc_terms) / stats.avg_doc_len)
    score = 0.0
    for term in query_terms:
        tf = frequencies.get(term, 0)
        if tf:
            score += stats.idf(term) * tf * (k1 + 1) / (tf + length_norm)
    return score


def _match_column(
    query_terms: list[str],
    column: ColumnCatalog,
    stats: Optional[CorpusStats],
    k: int,
) -> ColumnMatch:
    if not column.values:
        return ColumnMatch(column=column.column)
    documents = [tokenize(v) for v in column.values]
    stats = stats or CorpusStats.from_documents(documents)
    scores = [bm25_score(query_terms, doc, stats) for doc in documents]
    ranked = sorted(
        (i for i, s in enumerate(scores) if s > 0), key=lambda i: (-scores[i], i)
    )
    if ranked:
        values = [
            MatchedValue(value=column.values[i], score=scores[i]) for i in ranked[:k]
        ]
    else:
        # representative example value
        values = [MatchedValue(value=column.values[0], score=0.0)]
    return ColumnMatch(column=column.column, values=tuple(values))


def match_values(
    question: str,
    catalog: ValueCatalog,
    stats: Optional[Mapping[str, CorpusStats]] = None,
    k: int = DEFAULT_TOP_K_VALUES,
) -> MatchedValues:
    """Select per column the ``k`` catalog values most relevant to ``question``.

    Only positive scores qualify; ties keep catalog order. A column without
    any positive score contributes its first catalog value with score 0.

    Args:
        question (str): natural-language question.
        catalog (ValueCatalog): per-column value lists.
        stats (Optional[Mapping[str, CorpusStats]]): corpus statistics keyed by
            ``table.column``; computed from the catalog when absent.
        k (int): values kept per column, >= 1.

    Returns:
        MatchedValues: one entry per catalog column, in catalog order.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    query_terms = tokenize(question)
    stats = stats or {}
    matches = [
        _match_column(query_terms, column, stats.get(column.column.key), k)
        for column in catalog.columns
    ]
    logger.debug(
        "Matched values for %d columns (%d with positive scores)",
        len(matches),
        sum(1 for m in matches if any(v.score > 0 for v in m.values)),
    )
    return MatchedValues(columns=tuple(matches))
