import pytest
from pydantic import ValidationError

from mats_sql.constants import FeedbackKind, Origin, Status, Verdict
from mats_sql.models import (
    ColumnCatalog,
    ColumnDef,
    ColumnMatch,
    ColumnRef,
    ExecutionResponse,
    Feedback,
    ForeignKey,
    MatchedValue,
    MatchedValues,
    QuestionSample,
    SchemaSnapshot,
    SqlCandidate,
    TableDef,
)


def _table(name: str, *columns: str) -> TableDef:
    return TableDef(name=name, columns=tuple(ColumnDef(name=c) for c in columns))


def test_sample_needs_question() -> None:
    with pytest.raises(ValidationError):
        QuestionSample(id="1", question="", db_id="db")


def test_greedy_candidate_has_temperature_zero() -> None:
    SqlCandidate(sql="SELECT 1", origin=Origin.GREEDY)
    SqlCandidate(sql="SELECT 1", origin=Origin.SAMPLED, temperature=0.8)
    with pytest.raises(ValidationError):
        SqlCandidate(sql="SELECT 1", origin=Origin.GREEDY, temperature=0.8)


class TestExecutionResponse:
    def test_ok_carries_rows_only(self) -> None:
        response = ExecutionResponse(status=Status.OK, rows=((1, "a"),))
        assert response.ok
        with pytest.raises(ValidationError):
            ExecutionResponse(status=Status.OK, rows=(), error_text="boom")

    def test_rows_are_rectangular(self) -> None:
        with pytest.raises(ValidationError):
            ExecutionResponse(status=Status.OK, rows=((1,), (1, 2)))

    def test_syntax_error_needs_text(self) -> None:
        with pytest.raises(ValidationError):
            ExecutionResponse(status=Status.SYNTAX_ERROR)

    def test_timeout_has_no_payload(self) -> None:
        assert not ExecutionResponse(status=Status.TIMEOUT).ok
        with pytest.raises(ValidationError):
            ExecutionResponse(status=Status.TIMEOUT, rows=())


@pytest.mark.parametrize(
    "verdict,expected",
    [(Verdict.CORRECT, False), (Verdict.INCORRECT, True), (Verdict.UNPARSEABLE, False)],
)
def test_only_incorrect_feedback_indicates_error(
    verdict: Verdict, expected: bool
) -> None:
    feedback = Feedback(kind=FeedbackKind.CONDITION, raw_text="...", verdict=verdict)
    assert feedback.indicates_error is expected


class TestSchemaSnapshot:
    def test_lookup_is_case_insensitive(self) -> None:
        snapshot = SchemaSnapshot(tables=(_table("Singer", "Name", "age"),))
        assert snapshot.has_column("singer", "name")
        assert not snapshot.has_column("singer", "country")
        assert snapshot.column_count == 2

    def test_duplicate_tables_rejected(self) -> None:
        with pytest.raises(ValidationError):
            SchemaSnapshot(tables=(_table("a", "x"), _table("A", "y")))

    def test_duplicate_columns_rejected(self) -> None:
        with pytest.raises(ValidationError):
            _table("a", "x", "X")

    def test_foreign_key_endpoints_must_exist(self) -> None:
        fk = ForeignKey(
            table="concert", column="singer_id", ref_table="singer", ref_column="id"
        )
        with pytest.raises(ValidationError):
            SchemaSnapshot(tables=(_table("concert", "singer_id"),), foreign_keys=(fk,))


def test_catalog_values_are_distinct() -> None:
    ref = ColumnRef(table="singer", column="name")
    with pytest.raises(ValidationError):
        ColumnCatalog(column=ref, values=("a", "a"), value_types=("text", "text"))
    with pytest.raises(ValidationError):
        ColumnCatalog(column=ref, values=("a",), value_types=())


def test_matched_values_restricted_to_pruned_schema() -> None:
    matched = MatchedValues(
        columns=(
            ColumnMatch(
                column=ColumnRef(table="singer", column="name"),
                values=(MatchedValue(value="York", score=1.0),),
            ),
            ColumnMatch(
                column=ColumnRef(table="concert", column="year"),
                values=(MatchedValue(value="2014", score=0.5),),
            ),
        )
    )
    pruned = SchemaSnapshot(tables=(_table("singer", "name"),))
    restricted = matched.restrict_to(pruned)
    assert restricted.for_column("SINGER", "name") == ("York",)
    assert restricted.for_column("concert", "year") == ()
