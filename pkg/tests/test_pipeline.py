import json
from pathlib import Path
from typing import Callable

import pytest

from mats_sql.backend.base import GenerationRequest
from mats_sql.config import RunConfig
from mats_sql.constants import Origin
from mats_sql.errors import ConfigError
from mats_sql.models import QuestionSample
from mats_sql.pipeline import (
    Backends,
    SchemaStore,
    build_context,
    read_results,
    run_benchmark,
    run_sample,
)
from mats_sql.retrieval.ranker import LexicalRanker, RankerBudget
from tests.helpers import (
    FRANCE_COUNT,
    OLDEST,
    SAMPLES,
    SINGERS_2014,
    TIMBALAND_COUNTRY,
    YOUNGEST,
    RuleBackend,
    cycled,
    fenced,
)

WRONG_COUNTRY = "SELECT country FROM singer WHERE name = 'timbaland'"


def _france(request: GenerationRequest) -> list[str]:
    if request.greedy:
        return [fenced(FRANCE_COUNT)]
    lowercase = "select count(*) from singer where country = 'France'"
    return cycled([fenced(lowercase), fenced("SELECT count(*) FROM singer")], request.n)


def _backends() -> Backends:
    planner = RuleBackend(
        {
            "How many singers are from France?": _france,
            "oldest singer": fenced(YOUNGEST),
            "performed in 2014": fenced(SINGERS_2014),
            "Which country is Timbaland from?": fenced(WRONG_COUNTRY),
            "average age": "I cannot answer this.",
        },
        name="planner",
    )
    validator = RuleBackend(
        {
            YOUNGEST: "The ordering is reversed.\nThe SQL is incorrect.",
            WRONG_COUNTRY: "Wrong literal case.\nThe SQL is incorrect.",
            "### feedback": "Looks right.\nThe SQL is correct.",
        },
        name="validator",
    )
    fix = RuleBackend(
        {YOUNGEST: fenced(OLDEST), WRONG_COUNTRY: fenced(TIMBALAND_COUNTRY)}, name="fix"
    )
    selection = RuleBackend({"### task: selection": "1"}, name="selection")
    return Backends(planner=planner, validator=validator, fix=fix, selection=selection)


def _config(dataset: Path, db_root: Path, output_dir: Path, **knobs: int) -> RunConfig:
    return RunConfig(
        dataset=dataset,
        db_root=db_root,
        output_dir=output_dir,
        candidates=3,
        temperature=0.8,
        **knobs,
    )


def test_build_context(samples: list[QuestionSample], db_root: Path) -> None:
    store = SchemaStore(db_root, catalog_cap=100)
    ctx, stats = build_context(
        samples[3], store, LexicalRanker(), RankerBudget(max_tables=1), top_k_values=2
    )
    assert stats.tables_total == 2 and stats.tables_kept == 1
    assert ctx.schema_prompt.startswith("CREATE TABLE singer (")
    assert "'Timbaland'" in ctx.schema_prompt
    assert ctx.schema_prompt.endswith("Timbaland refers to name = 'Timbaland'")
    assert store.get("concert_singer") is store.get("concert_singer")


class TestRunBenchmark:
    def test_five_questions(self, tmp_path: Path, dataset: Path, db_root: Path) -> None:
        backends = _backends()
        config = _config(dataset, db_root, tmp_path / "run")
        results, summary = run_benchmark(config, backends, progress=False)

        assert [r.sample_id for r in results] == ["0", "1", "2", "3", "4"]
        assert [r.ex_match for r in results] == [True, True, True, True, False]
        assert summary.total == 5 and summary.matches == 4
        assert summary.ex == pytest.approx(80.0)
        assert summary.failures == 1

        france = results[0]
        assert france.final_sql == FRANCE_COUNT
        assert france.candidates[1].duplicate_of == 0
        assert france.selected_index == 0

        oldest = results[1]
        assert oldest.candidates[0].candidate.origin == Origin.GREEDY
        assert oldest.candidates[0].fixed is not None
        assert oldest.candidates[0].fixed.origin == Origin.FIXED
        assert oldest.final_sql == OLDEST

        assert results[3].final_sql == TIMBALAND_COUNTRY
        assert results[4].error is not None and "EmptyPlanError" in results[4].error
        assert results[4].final_sql is None

        # only the France question keeps two distinct candidates
        assert backends.selection is not None
        assert isinstance(backends.selection, RuleBackend)
        assert backends.selection.call_count == 1

    def test_outputs(self, tmp_path: Path, dataset: Path, db_root: Path) -> None:
        output_dir = tmp_path / "run"
        config = _config(dataset, db_root, output_dir)
        run_benchmark(config, _backends(), progress=False)
        for name in ("config.json", "results.jsonl", "timings.jsonl", "summary.json"):
            assert (output_dir / name).is_file()
        assert len(read_results(output_dir / "results.jsonl")) == 5
        summary = json.loads((output_dir / "summary.json").read_text())
        assert summary["with_gold"] == 5
        first = json.loads((output_dir / "results.jsonl").read_text().splitlines()[0])
        assert "timings" not in first
        assert "duration" not in first["candidates"][0]["response"]

    def test_reruns_are_identical(
        self, tmp_path: Path, dataset: Path, db_root: Path
    ) -> None:
        serial = _config(dataset, db_root, tmp_path / "serial")
        parallel = _config(dataset, db_root, tmp_path / "parallel", parallelism=3)
        run_benchmark(serial, _backends(), progress=False)
        run_benchmark(parallel, _backends(), progress=False)
        assert (tmp_path / "serial" / "results.jsonl").read_bytes() == (
            tmp_path / "parallel" / "results.jsonl"
        ).read_bytes()


def test_run_sample_needs_selection(
    tmp_path: Path, dataset: Path, db_root: Path, samples: list[QuestionSample]
) -> None:
    backends = _backends()
    without = Backends(
        planner=backends.planner, validator=backends.validator, fix=backends.fix
    )
    with pytest.raises(ConfigError):
        run_sample(samples[0], _config(dataset, db_root, tmp_path), without)


def test_selection_none_falls_back_to_greedy(
    tmp_path: Path, dataset: Path, db_root: Path, samples: list[QuestionSample]
) -> None:
    backends = _backends()
    refusing = Backends(
        planner=backends.planner,
        validator=backends.validator,
        fix=backends.fix,
        selection=RuleBackend({"### task: selection": "none"}),
    )
    result = run_sample(samples[0], _config(dataset, db_root, tmp_path), refusing)
    assert result.fallback
    assert result.selected_index == 0
    assert result.final_sql == FRANCE_COUNT


def _oldest_variants(request: GenerationRequest) -> list[str]:
    if request.greedy:
        return [fenced(OLDEST)]
    return [
        fenced(f"SELECT name FROM singer WHERE age > {i} ORDER BY age DESC LIMIT 1")
        for i in range(1, request.n + 1)
    ]


def test_ten_candidates_in_chunks_of_five(tmp_path: Path, db_root: Path) -> None:
    dataset = tmp_path / "oldest.json"
    dataset.write_text(json.dumps([SAMPLES[1]]), encoding="utf-8")
    planner = RuleBackend({"oldest singer": _oldest_variants}, name="planner")
    validator = RuleBackend({"### feedback": "The SQL is correct."}, name="validator")
    fix = RuleBackend({}, name="fix")
    selection = RuleBackend({"### task: selection": "1"}, name="selection")
    backends = Backends(
        planner=planner, validator=validator, fix=fix, selection=selection
    )
    config = RunConfig(
        dataset=dataset,
        db_root=db_root,
        output_dir=tmp_path / "run",
        candidates=10,
        temperature=0.8,
        selection_chunk=5,
    )
    results, summary = run_benchmark(config, backends, progress=False)

    assert len(results[0].candidates) == 10
    assert all(c.duplicate_of is None for c in results[0].candidates)
    # [0..4] [5..9], then the two chunk winners
    assert selection.call_count == 3
    assert fix.call_count == 0
    assert results[0].final_sql == OLDEST
    assert summary.ex == pytest.approx(100.0)


def test_correct_greedy_needs_no_fix(
    tmp_path: Path, dataset: Path, db_root: Path, samples: list[QuestionSample]
) -> None:
    planner = RuleBackend({"oldest singer": fenced(OLDEST)}, name="planner")
    validator = RuleBackend({"### feedback": "The SQL is correct."}, name="validator")
    fix = RuleBackend({}, name="fix")
    backends = Backends(
        planner=planner,
        validator=validator,
        fix=fix,
        selection=RuleBackend({}, name="selection"),
    )
    config = RunConfig(
        dataset=dataset, db_root=db_root, output_dir=tmp_path, candidates=1
    )
    result = run_sample(samples[1], config, backends)
    assert result.ex_match
    assert result.final_sql == OLDEST
    assert result.candidates[0].fixed is None
    assert fix.call_count == 0
    assert validator.call_count == 2


@pytest.mark.parametrize(
    "exc",
    [
        lambda: QuestionSample.model_validate({}),
        lambda: int("not a number"),
    ],
)
def test_unexpected_sample_error_does_not_end_the_run(
    tmp_path: Path, dataset: Path, db_root: Path, exc: Callable[[], object]
) -> None:
    def _broken(request: GenerationRequest) -> list[str]:
        exc()
        return []

    backends = _backends()
    assert isinstance(backends.planner, RuleBackend)
    backends.planner.rules["oldest singer"] = _broken
    config = _config(dataset, db_root, tmp_path / "run")
    results, summary = run_benchmark(config, backends, progress=False)

    assert [r.sample_id for r in results] == ["0", "1", "2", "3", "4"]
    oldest = results[1]
    assert oldest.error is not None
    assert oldest.error.startswith(("ValidationError", "ValueError"))
    assert oldest.ex_match is False
    assert [r.ex_match for r in results] == [True, False, True, True, False]
    assert summary.failures == 2
    assert len(read_results(tmp_path / "run" / "results.jsonl")) == 5
