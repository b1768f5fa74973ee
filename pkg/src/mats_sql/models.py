"""Core data model of mats_sql.

Immutable pydantic models shared by all stages: benchmark samples, schema
snapshots, value catalogs, SQL candidates, execution responses and
validator feedback.
"""

from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from mats_sql.constants import GREEDY_TEMPERATURE, FeedbackKind, Origin, Status, Verdict

Scalar = Union[None, int, float, str]
Row = tuple[Scalar, ...]
NormalizedTable = tuple[Row, ...]


class FrozenModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class QuestionSample(FrozenModel):
    """One benchmark item.

    Attributes:
        id (str): Opaque sample identifier.
        question (str): Natural-language question.
        db_id (str): Database identifier, resolved as <root>/<db_id>/<db_id>.sqlite.
        evidence (Optional[str]): External knowledge (BIRD `evidence`).
        gold_sql (Optional[str]): Ground-truth SQL.
        difficulty (Optional[str]): Difficulty label when the dataset provides one.
    """

    id: str
    question: str = Field(min_length=1)
    db_id: str = Field(min_length=1)
    evidence: Optional[str] = None
    gold_sql: Optional[str] = None
    difficulty: Optional[str] = None


class ColumnDef(FrozenModel):
    name: str = Field(min_length=1)
    declared_type: str = ""
    is_primary_key: bool = False


class TableDef(FrozenModel):
    name: str = Field(min_length=1)
    columns: tuple[ColumnDef, ...] = Field(min_length=1)

    @model_validator(mode="after")
    def _unique_columns(self) -> "TableDef":
        seen: set[str] = set()
        for column in self.columns:
            key = column.name.casefold()
            if key in seen:
                raise ValueError(f"duplicate column {self.name}.{column.name}")
            seen.add(key)
        return self

    def column(self, name: str) -> Optional[ColumnDef]:
        key = name.casefold()
        return next((c for c in self.columns if c.name.casefold() == key), None)

    @property
    def primary_key(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns if c.is_primary_key)


class ColumnRef(FrozenModel):
    table: str
    column: str

    @property
    def key(self) -> str:
        return f"{self.table}.{self.column}"


class ForeignKey(FrozenModel):
    """child.column -> parent.column"""

    table: str
    column: str
    ref_table: str
    ref_column: str

    @property
    def endpoints(self) -> tuple[ColumnRef, ColumnRef]:
        return (
            ColumnRef(table=self.table, column=self.column),
            ColumnRef(table=self.ref_table, column=self.ref_column),
        )


class SchemaSnapshot(FrozenModel):
    """Tables, columns and foreign keys of one database (possibly pruned).

    Attributes:
        tables (tuple[TableDef, ...]): Tables in storage order.
        foreign_keys (tuple[ForeignKey, ...]): Foreign-key pairs; both endpoints exist.
    """

    tables: tuple[TableDef, ...] = ()
    foreign_keys: tuple[ForeignKey, ...] = ()

    @model_validator(mode="after")
    def _check_references(self) -> "SchemaSnapshot":
        seen: set[str] = set()
        for table in self.tables:
            key = table.name.casefold()
            if key in seen:
                raise ValueError(f"duplicate table {table.name}")
            seen.add(key)
        for fk in self.foreign_keys:
            for ref in fk.endpoints:
                if not self.has_column(ref.table, ref.column):
                    raise ValueError(f"foreign key endpoint {ref.key} does not exist")
        return self

    def table(self, name: str) -> Optional[TableDef]:
        key = name.casefold()
        return next((t for t in self.tables if t.name.casefold() == key), None)

    def has_column(self, table: str, column: str) -> bool:
        table_def = self.table(table)
        return table_def is not None and table_def.column(column) is not None

    def column_refs(self) -> list[ColumnRef]:
        return [
            ColumnRef(table=t.name, column=c.name)
            for t in self.tables
            for c in t.columns
        ]

    @property
    def column_count(self) -> int:
        return sum(len(t.columns) for t in self.tables)


class ColumnCatalog(FrozenModel):
    """Distinct non-null values of one column, as text.

    ``value_types`` runs parallel to ``values`` (integer, real or text).
    """

    column: ColumnRef
    values: tuple[str, ...] = ()
    value_types: tuple[str, ...] = ()
    sampled_complete: bool = True

    @model_validator(mode="after")
    def _distinct(self) -> "ColumnCatalog":
        if len(set(self.values)) != len(self.values):
            raise ValueError(f"catalog values of {self.column.key} are not distinct")
        if len(self.value_types) != len(self.values):
            raise ValueError("value_types must be parallel to values")
        return self


class ValueCatalog(FrozenModel):
    columns: tuple[ColumnCatalog, ...] = ()

    def get(self, table: str, column: str) -> Optional[ColumnCatalog]:
        key = (table.casefold(), column.casefold())
        return next(
            (
                c
                for c in self.columns
                if (c.column.table.casefold(), c.column.column.casefold()) == key
            ),
            None,
        )


class MatchedValue(FrozenModel):
    value: str
    score: float = Field(ge=0)


class ColumnMatch(FrozenModel):
    column: ColumnRef
    values: tuple[MatchedValue, ...] = ()


class MatchedValues(FrozenModel):
    """Per column the values selected for the schema prompt."""

    columns: tuple[ColumnMatch, ...] = ()

    def for_column(self, table: str, column: str) -> tuple[str, ...]:
        key = (table.casefold(), column.casefold())
        for match in self.columns:
            if (match.column.table.casefold(), match.column.column.casefold()) == key:
                return tuple(v.value for v in match.values)
        return ()

    def restrict_to(self, snapshot: SchemaSnapshot) -> "MatchedValues":
        """Drop matches for columns that are not part of ``snapshot``."""
        return MatchedValues(
            columns=tuple(
                m
                for m in self.columns
                if snapshot.has_column(m.column.table, m.column.column)
            )
        )


class SqlCandidate(FrozenModel):
    plan: str = ""
    sql: str = Field(min_length=1)
    origin: Origin
    temperature: float = Field(default=GREEDY_TEMPERATURE, ge=0)

    @model_validator(mode="after")
    def _greedy_is_temperature_zero(self) -> "SqlCandidate":
        if self.origin == Origin.GREEDY and self.temperature != GREEDY_TEMPERATURE:
            raise ValueError("greedy candidates carry temperature 0")
        return self


class ExecutionResponse(FrozenModel):
    """Outcome of running one query.

    Exactly one payload is populated: ``rows`` for ok, ``error_text`` for
    syntax_error, neither for timeout.
    """

    status: Status
    rows: Optional[NormalizedTable] = None
    error_text: Optional[str] = None
    duration: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _one_payload(self) -> "ExecutionResponse":
        if self.status == Status.OK:
            if self.rows is None or self.error_text is not None:
                raise ValueError("ok responses carry rows only")
            if self.rows and len({len(r) for r in self.rows}) != 1:
                raise ValueError("result table is not rectangular")
        elif self.status == Status.SYNTAX_ERROR:
            if self.error_text is None or self.rows is not None:
                raise ValueError("syntax_error responses carry error_text only")
        elif self.rows is not None or self.error_text is not None:
            raise ValueError("timeout responses carry no payload")
        return self

    @property
    def ok(self) -> bool:
        return self.status == Status.OK


class Feedback(FrozenModel):
    kind: FeedbackKind
    raw_text: str
    verdict: Verdict

    @property
    def indicates_error(self) -> bool:
        # unparseable verdicts count as correct so parser noise never triggers a fix
        return self.verdict == Verdict.INCORRECT
