from mats_sql.retrieval.bm25 import CorpusStats, bm25_score, match_values
from mats_sql.retrieval.ranker import (
    ElementScores,
    LexicalRanker,
    PrecomputedRanker,
    RankerBudget,
    SchemaRanker,
    filter_schema,
    rank_elements,
)
from mats_sql.retrieval.terms import tokenize

__all__ = [
    "CorpusStats",
    "ElementScores",
    "LexicalRanker",
    "PrecomputedRanker",
    "RankerBudget",
    "SchemaRanker",
    "bm25_score",
    "filter_schema",
    "match_values",
    "rank_elements",
    "tokenize",
]
