"""Schema prompt rendering.

Layout (fixed, shared by all agents)::

    CREATE TABLE singer (
      singer_id INTEGER PRIMARY KEY,
      name TEXT, -- values: 'York', 'Yorkshire'
      age INTEGER
    );

    Foreign keys:
    concert.singer_id = singer.singer_id

    External knowledge:
    <evidence>

Blank-line separated sections; empty sections are left out.
"""

import re
from typing import Optional

from mats_sql.errors import SchemaError
from mats_sql.models import MatchedValues, SchemaSnapshot, TableDef

FOREIGN_KEYS_HEADER = "Foreign keys:"
EVIDENCE_HEADER = "External knowledge:"

_PLAIN_IDENTIFIER = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_CREATE_LINE = re.compile(r'^CREATE TABLE ("(?:[^"]|"")+"|\S+) \($')
_COLUMN_LINE = re.compile(r'^  ("(?:[^"]|"")+"|\S+)')
_VALUES_MARK = " -- values: "
_VALUE = re.compile(r"'((?:[^'\\]|''|\\.)*)'")
_ESCAPES = {"\\": "\\\\", "\n": "\\n", "\r": "\\r", "'": "''"}
_UNESCAPES = {"\\\\": "\\", "\\n": "\n", "\\r": "\r", "''": "'"}
# other characters str.splitlines breaks on
_LINE_BREAKS = frozenset("\v\f\x1c\x1d\x1e\x85\u2028\u2029")
_ESCAPED = re.compile(r"\\u[0-9a-f]{4}|\\[\\nr]|''")


def quote_identifier(name: str) -> str:
    if _PLAIN_IDENTIFIER.match(name):
        return name
    return '"' + name.replace('"', '""') + '"'


def unquote_identifier(token: str) -> str:
    if len(token) >= 2 and token[0] == token[-1] == '"':
        return token[1:-1].replace('""', '"')
    return token


def _escape(ch: str) -> str:
    if ch in _LINE_BREAKS:
        return f"\\u{ord(ch):04x}"
    return _ESCAPES.get(ch, ch)


def _unescape(match: re.Match[str]) -> str:
    token = match.group(0)
    if token.startswith("\\u"):
        return chr(int(token[2:], 16))
    return _UNESCAPES[token]


def quote_value(value: str) -> str:
    """Single-quote a value so it stays on one line ('' for ', \\n for newline)."""
    return "'" + "".join(_escape(ch) for ch in value) + "'"


def unquote_value(token: str) -> str:
    body = token[1:-1] if len(token) >= 2 and token[0] == token[-1] == "'" else token
    return _ESCAPED.sub(_unescape, body)


def _render_table(table: TableDef, matched: MatchedValues) -> str:
    lines = [f"CREATE TABLE {quote_identifier(table.name)} ("]
    last = len(table.columns) - 1
    for i, column in enumerate(table.columns):
        line = f"  {quote_identifier(column.name)}"
        if column.declared_type:
            line += f" {column.declared_type}"
        if column.is_primary_key:
            line += " PRIMARY KEY"
        if i < last:
            line += ","
        values = matched.for_column(table.name, column.name)
        if values:
            line += _VALUES_MARK + ", ".join(quote_value(v) for v in values)
        lines.append(line)
    lines.append(");")
    return "\n".join(lines)


def render_schema_prompt(
    snapshot: SchemaSnapshot,
    matched: Optional[MatchedValues] = None,
    evidence: Optional[str] = None,
) -> str:
    """Render the schema section of every agent prompt.

    Args:
        snapshot (SchemaSnapshot): (pruned) schema to render, in its own order.
        matched (Optional[MatchedValues]): values shown as trailing column comments.
        evidence (Optional[str]): external knowledge, rendered under its own header.

    Raises:
        SchemaError: a match references a column missing from ``snapshot``.

    Returns:
        str: deterministic prompt text.
    """
    matched = matched or MatchedValues()
    for match in matched.columns:
        if not snapshot.has_column(match.column.table, match.column.column):
            raise SchemaError(
                f"matched values reference unknown column {match.column.key}"
            )

    sections = [_render_table(t, matched) for t in snapshot.tables]
    if snapshot.foreign_keys:
        fk_lines = [
            f"{quote_identifier(fk.table)}.{quote_identifier(fk.column)} = "
            f"{quote_identifier(fk.ref_table)}.{quote_identifier(fk.ref_column)}"
            for fk in snapshot.foreign_keys
        ]
        sections.append("\n".join([FOREIGN_KEYS_HEADER, *fk_lines]))
    if evidence:
        sections.append(f"{EVIDENCE_HEADER}\n{evidence.strip()}")
    return "\n\n".join(sections)


def parse_schema_names(prompt: str) -> dict[str, list[str]]:
    """Read table and column names back out of a rendered schema section."""
    names: dict[str, list[str]] = {}
    current: Optional[str] = None
    for line in prompt.splitlines():
        if current is None:
            create = _CREATE_LINE.match(line)
            if create:
                current = unquote_identifier(create.group(1))
                names[current] = []
            continue
        if line == ");":
            current = None
            continue
        column = _COLUMN_LINE.match(line)
        if column:
            names[current].append(unquote_identifier(column.group(1).rstrip(",")))
    return names


def parse_schema_values(prompt: str) -> dict[str, list[str]]:
    """Read matched values back out of a rendered schema section, keyed table.column."""
    values: dict[str, list[str]] = {}
    current: Optional[str] = None
    for line in prompt.splitlines():
        if current is None:
            create = _CREATE_LINE.match(line)
            if create:
                current = unquote_identifier(create.group(1))
            continue
        if line == ");":
            current = None
            continue
        column = _COLUMN_LINE.match(line)
        if column and _VALUES_MARK in line:
            name = unquote_identifier(column.group(1).rstrip(","))
            comment = line[column.end() :].split(_VALUES_MARK, 1)[1]
            values[f"{current}.{name}"] = [
                unquote_value(m.group(0)) for m in _VALUE.finditer(comment)
            ]
    return values
