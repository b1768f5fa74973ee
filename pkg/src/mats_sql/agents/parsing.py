"""Completion parsing rules shared by all agents.

* SQL: the last ```sql fenced block; otherwise the last statement that starts
  a line with SELECT or WITH and runs to ``;``, a blank line or the end.
  The plan is the text before the extracted SQL.
* Verdict: the last line containing "the sql is correct|incorrect"
  (case-insensitive).
* Choice: the last non-empty line. An index named after "answer",
  "candidate" or a similar word wins; otherwise "none" means no candidate,
  and a bare number or an ordinal is a 1-based candidate index. Numbers
  inside a refusal ("none of the 3 candidates") are not indexes.
"""

import re
from typing import Optional

import sqlparse

from mats_sql.constants import Verdict

_FENCE = re.compile(r"```[ \t]*sql[ \t]*\n?(.*?)```", re.IGNORECASE | re.DOTALL)
_STATEMENT = re.compile(
    r"^[ \t]*(?:SELECT|WITH)\b.*?(?:;|\n[ \t]*\n|\Z)",
    re.IGNORECASE | re.DOTALL | re.MULTILINE,
)
_VERDICT = re.compile(r"the\s+sql\s+is\s+(correct|incorrect)\b", re.IGNORECASE)
_EXPLICIT = re.compile(
    r"\b(?:answer|candidate|choice|option|pick|choose|select(?:ed)?)\b"
    r"(?:\s+is)?\W{0,3}#?(\d+)\b",
    re.IGNORECASE,
)
_BARE = re.compile(r"^\W*#?(\d+)\W*$")
_NONE = re.compile(r"\bnone\b", re.IGNORECASE)
ORDINALS = {
    "first": 1,
    "second": 2,
    "third": 3,
    "fourth": 4,
    "fifth": 5,
    "sixth": 6,
    "seventh": 7,
    "eighth": 8,
    "ninth": 9,
    "tenth": 10,
}
_ORDINAL = re.compile(r"\b(" + "|".join(ORDINALS) + r")\b", re.IGNORECASE)


def _clean(sql: str) -> str:
    return sql.strip().rstrip(";").strip()


def extract_sql(text: str) -> Optional[tuple[str, str]]:
    """Split a completion into (plan, sql); None when it holds no SQL."""
    fences = list(_FENCE.finditer(text))
    if fences:
        last = fences[-1]
        sql = _clean(last.group(1))
        if sql:
            return text[: last.start()].strip(), sql
    statements = list(_STATEMENT.finditer(text))
    if not statements:
        return None
    last = statements[-1]
    sql = _clean(last.group(0))
    if not sql:
        return None
    return text[: last.start()].strip(), sql


def parse_verdict(text: str) -> Verdict:
    for line in reversed(text.splitlines()):
        matches = _VERDICT.findall(line)
        if matches:
            return Verdict(matches[-1].lower())
    return Verdict.UNPARSEABLE


def parse_choice(text: str, candidates: int) -> Optional[int]:
    """0-based index chosen by a selection completion, or None for "none".

    Raises:
        ValueError: no usable answer on the last line, or index out of range.
    """
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines:
        raise ValueError("empty selection answer")
    last = lines[-1]
    explicit = _EXPLICIT.findall(last)
    bare = _BARE.match(last)
    ordinal = _ORDINAL.search(last)
    if explicit:
        choice = int(explicit[-1])
    elif _NONE.search(last):
        return None
    elif bare:
        choice = int(bare.group(1))
    elif ordinal:
        choice = ORDINALS[ordinal.group(1).lower()]
    else:
        raise ValueError(f"no candidate named in {last!r}")
    if not 1 <= choice <= candidates:
        raise ValueError(f"candidate {choice} out of range 1..{candidates}")
    return choice - 1


def normalize_sql(sql: str) -> str:
    """Canonical text used to detect duplicate candidates (keyword case, whitespace)."""
    formatted = sqlparse.format(sql, keyword_case="upper", strip_comments=True)
    return " ".join(formatted.split()).rstrip(";").strip()
