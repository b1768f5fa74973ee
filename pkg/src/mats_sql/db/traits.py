"""Lexical SQL trait recognition.

Traits are read off the sqlparse token stream with a parenthesis-depth
counter; no grammar is applied. Comments and string literals never
contribute a trait, and malformed SQL yields the traits of whatever the
lexer could make of it.
"""

import sqlparse
from pydantic import BaseModel, ConfigDict
from sqlparse import tokens as T

from mats_sql.constants import GATED_TRAITS

AGGREGATES = {
    "MIN": "uses_min",
    "MAX": "uses_max",
    "COUNT": "uses_count",
    "AVG": "uses_avg",
    "SUM": "uses_sum",
}

READ_STATEMENT_TYPES = {"SELECT", "UNKNOWN"}
FORBIDDEN_LEADING_KEYWORDS = {
    "ATTACH",
    "DETACH",
    "VACUUM",
    "PRAGMA",
    "REINDEX",
    "ANALYZE",
    "BEGIN",
    "COMMIT",
    "ROLLBACK",
    "SAVEPOINT",
    "RELEASE",
}


class SqlTraits(BaseModel):
    model_config = ConfigDict(frozen=True)

    has_join: bool = False
    has_subquery: bool = False
    has_order_by_outer: bool = False
    has_group_by: bool = False
    has_limit: bool = False
    uses_min: bool = False
    uses_max: bool = False
    uses_count: bool = False
    uses_avg: bool = False
    uses_sum: bool = False
    uses_divide: bool = False
    uses_case_when: bool = False
    logical_connectors: int = 0

    def gated_operations(self) -> list[str]:
        """Names of the set traits that let the selection validator skip its call."""
        return [name for name in GATED_TRAITS if getattr(self, name)]


def _significant_tokens(sql: str) -> list[tuple[object, str]]:
    return [
        (ttype, value)
        for ttype, value in sqlparse.lexer.tokenize(sql)
        if ttype not in T.Whitespace and ttype not in T.Comment
    ]


def _keyword(ttype: object, value: str) -> str | None:
    if ttype in T.Keyword:
        # sqlparse lexes "ORDER  BY" / "LEFT JOIN" as single tokens
        return " ".join(value.upper().split())
    return None


def classify_sql(sql: str) -> SqlTraits:
    """Recognize the SQL traits used for validator gating and report breakdowns.

    Args:
        sql (str): SQL text, possibly malformed.

    Returns:
        SqlTraits: trait flags and the count of AND/OR connectors.
    """
    flags: dict[str, bool] = {}
    connectors = 0
    pending_between = 0
    depth = 0
    previous_keyword: str | None = None

    stream = _significant_tokens(sql)
    for i, (ttype, value) in enumerate(stream):
        if ttype in T.Literal:
            previous_keyword = None
            continue
        if ttype in T.Punctuation:
            if value == "(":
                depth += 1
            elif value == ")":
                depth = max(depth - 1, 0)
            previous_keyword = None
            continue
        if ttype in T.Operator and "/" in value:
            flags["uses_divide"] = True
            continue

        upper = value.upper()
        following = stream[i + 1][1] if i + 1 < len(stream) else ""
        if upper in AGGREGATES and following == "(":
            flags[AGGREGATES[upper]] = True

        keyword = _keyword(ttype, value)
        if keyword is None:
            previous_keyword = None
            continue
        if keyword == "SELECT" and depth > 0:
            flags["has_subquery"] = True
        elif keyword == "ORDER BY" or (keyword == "BY" and previous_keyword == "ORDER"):
            if depth == 0:
                flags["has_order_by_outer"] = True
        elif keyword == "GROUP BY" or (keyword == "BY" and previous_keyword == "GROUP"):
            flags["has_group_by"] = True
        elif keyword.endswith("JOIN"):
            flags["has_join"] = True
        elif keyword == "LIMIT":
            flags["has_limit"] = True
        elif keyword == "CASE":
            flags["uses_case_when"] = True
        elif keyword == "BETWEEN":
            pending_between += 1
        elif keyword == "AND":
            if pending_between:
                pending_between -= 1
            else:
                connectors += 1
        elif keyword == "OR":
            connectors += 1
        previous_keyword = keyword

    return SqlTraits(logical_connectors=connectors, **flags)


def is_write_statement(sql: str) -> bool:
    """True when any statement in ``sql`` would modify the database or connection."""
    for statement in sqlparse.parse(sql):
        if statement.get_type() not in READ_STATEMENT_TYPES:
            return True
        # leaf token: grouping may fold an unknown leading word into an identifier
        first = next(
            (
                t
                for t in statement.flatten()
                if not t.is_whitespace and t.ttype not in T.Comment
            ),
            None,
        )
        if first is not None and first.value.upper() in FORBIDDEN_LEADING_KEYWORDS:
            return True
    return False
