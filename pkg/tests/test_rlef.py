import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from mats_sql.agents.prompts import AgentContext
from mats_sql.backend.base import GenerationRequest
from mats_sql.config import RunConfig
from mats_sql.constants import AgentKind, Origin, Provenance
from mats_sql.errors import ConfigError, GoldExecutionError
from mats_sql.models import QuestionSample, SqlCandidate
from mats_sql.pipeline import Backends
from mats_sql.rlef import (
    GoldCache,
    IterationManifest,
    IterationRecord,
    Observation,
    PreferencePair,
    build_fix_pairs,
    build_planner_pairs,
    build_validator_pairs,
    emit_pairs,
    read_pairs,
    run_iteration,
    sample_actions,
    should_stop,
)
from mats_sql.rlef.iteration import relative_change
from mats_sql.rlef.sampling import Action, ActionSet
from tests.helpers import (
    FRANCE_COUNT,
    OLDEST,
    SAMPLES,
    YOUNGEST,
    RuleBackend,
    cycled,
    fenced,
)

SELECTION_OK = "Columns fine. The SQL is correct."
SORT_WRONG = "cond: sort descending. The SQL is incorrect."
COND_OK = "cond fine. The SQL is correct."


def _observation(agent: AgentKind = AgentKind.PLANNER) -> Observation:
    return Observation(agent=agent, prompt=f"{agent} prompt", sample_id="1")


def _actions(texts: list[str], agent: AgentKind = AgentKind.PLANNER) -> ActionSet:
    return ActionSet(
        observation=_observation(agent),
        actions=tuple(Action(text=t, provenance=Provenance.POLICY) for t in texts),
    )


def _planner(sql: str) -> SqlCandidate:
    return SqlCandidate(sql=sql, origin=Origin.GREEDY)


class TestSampleActions:
    def test_policy_first_then_assistant(self) -> None:
        policy = RuleBackend({"prompt": ["a", "b"]}, name="policy")
        assistant = RuleBackend({"prompt": "c"}, name="assistant")
        actions = sample_actions(
            policy, assistant, _observation(), k=3, temperature=0.8
        )
        assert actions.texts == ["a", "b", "c"]
        assert actions.provenance_of("c") == Provenance.ASSISTANT
        assert actions.provenance_of("a") == Provenance.POLICY
        assert [(r.n, r.temperature) for r in policy.requests] == [(2, 0.8)]
        assert [(r.n, r.temperature) for r in assistant.requests] == [(1, 0.8)]

    def test_policy_only(self) -> None:
        policy = RuleBackend({"prompt": ["a", "b", "c"]})
        actions = sample_actions(policy, None, _observation(), k=3, temperature=1.0)
        assert actions.texts == ["a", "b", "c"]
        assert actions.usable

    def test_arguments(self) -> None:
        policy = RuleBackend({"prompt": "a"})
        with pytest.raises(ValueError):
            sample_actions(policy, policy, _observation(), k=1, temperature=0.8)
        with pytest.raises(ValueError):
            sample_actions(policy, None, _observation(), k=3, temperature=0.0)

    def test_failing_policy_leaves_partial_set(self) -> None:
        assistant = RuleBackend({"prompt": "c"})
        actions = sample_actions(
            RuleBackend({}), assistant, _observation(), k=3, temperature=0.8
        )
        assert actions.texts == ["c"]
        assert not actions.usable


class TestPlannerPairs:
    def test_chosen_major(self, samples: list[QuestionSample], db_path: Path) -> None:
        texts = [fenced(OLDEST), fenced(YOUNGEST), "no query here", fenced(OLDEST)]
        pairs = build_planner_pairs(samples[1], _actions(texts), db_path, GoldCache())
        assert [(p.chosen, p.rejected) for p in pairs] == [
            (fenced(OLDEST), fenced(YOUNGEST)),
            (fenced(OLDEST), "no query here"),
        ]
        assert all(p.agent == AgentKind.PLANNER and p.sample_id == "1" for p in pairs)

    def test_all_chosen_pair_against_empty(
        self, samples: list[QuestionSample], db_path: Path
    ) -> None:
        texts = [fenced(OLDEST), fenced(OLDEST, "Plan: sort by age, descending.")]
        pairs = build_planner_pairs(samples[1], _actions(texts), db_path, GoldCache())
        assert len(pairs) == 2
        assert {p.rejected for p in pairs} == {""}

    def test_none_chosen(self, samples: list[QuestionSample], db_path: Path) -> None:
        texts = [fenced(YOUNGEST), "no query here"]
        pairs = build_planner_pairs(samples[1], _actions(texts), db_path, GoldCache())
        assert pairs == []

    def test_gold_must_execute(
        self, samples: list[QuestionSample], db_path: Path
    ) -> None:
        broken = samples[1].model_copy(update={"gold_sql": "SELECT nope FROM singer"})
        with pytest.raises(GoldExecutionError):
            build_planner_pairs(
                broken, _actions([fenced(OLDEST)]), db_path, GoldCache()
            )

    def test_gold_is_required(self, db_path: Path) -> None:
        sample = QuestionSample(id="9", question="Who sings?", db_id="concert_singer")
        with pytest.raises(ValueError):
            GoldCache().get(sample, db_path)


def test_fix_pairs(samples: list[QuestionSample], db_path: Path) -> None:
    wrong = "SELECT count(*) FROM singer"
    actions = _actions([fenced(wrong), fenced(FRANCE_COUNT)], AgentKind.FIX)
    pairs = build_fix_pairs(samples[0], actions, db_path, GoldCache())
    assert [(p.chosen, p.rejected) for p in pairs] == [
        (fenced(FRANCE_COUNT), fenced(wrong))
    ]
    assert pairs[0].agent == AgentKind.FIX
    assert pairs[0].prompt == "fix prompt"


class TestValidatorPairs:
    def test_fix_outcome_labels_feedback(self, oldest_ctx: AgentContext) -> None:
        fixer = RuleBackend({"sort descending": fenced(OLDEST)})
        partition = build_validator_pairs(
            oldest_ctx.sample,
            oldest_ctx,
            _actions([SELECTION_OK, SELECTION_OK], AgentKind.VALIDATOR_SELECTION),
            _actions([SORT_WRONG, COND_OK], AgentKind.VALIDATOR_CONDITION),
            fixer,
            _planner(YOUNGEST),
            GoldCache(),
        )
        # the selection text is labelled both ways and dropped
        assert partition.chosen_selection == ()
        assert partition.rejected_selection == ()
        assert partition.chosen_condition == (SORT_WRONG,)
        assert partition.rejected_condition == (COND_OK,)
        assert partition.conflicts == 0
        assert fixer.call_count == 1

        pairs = partition.pairs(
            _observation(AgentKind.VALIDATOR_SELECTION),
            _observation(AgentKind.VALIDATOR_CONDITION),
        )
        assert [(p.agent, p.chosen, p.rejected) for p in pairs] == [
            (AgentKind.VALIDATOR_CONDITION, SORT_WRONG, COND_OK)
        ]

    def test_fix_label_wins_over_verdict(self, oldest_ctx: AgentContext) -> None:
        wrong_column = "Wrong column. The SQL is incorrect."
        filters_ok = "Filters fine. The SQL is correct."
        no_filters = "No filters needed. The SQL is correct."
        fixer = RuleBackend({"Wrong column": fenced(YOUNGEST)})
        partition = build_validator_pairs(
            oldest_ctx.sample,
            oldest_ctx,
            _actions([SELECTION_OK, wrong_column], AgentKind.VALIDATOR_SELECTION),
            _actions([filters_ok, no_filters], AgentKind.VALIDATOR_CONDITION),
            fixer,
            _planner(OLDEST),
            GoldCache(),
        )
        assert partition.chosen_selection == (SELECTION_OK,)
        assert partition.rejected_selection == (wrong_column,)
        assert partition.chosen_condition == (filters_ok,)
        assert partition.rejected_condition == (no_filters,)
        assert partition.conflicts == 1

    def test_edited_feedback_is_chosen(self, oldest_ctx: AgentContext) -> None:
        vague = "Vague complaint. The SQL is incorrect."
        rewritten = "Sort by age descending. The SQL is incorrect."
        fixer = RuleBackend(
            {
                "Sort by age descending": fenced(OLDEST),
                "Vague complaint": fenced(YOUNGEST),
            }
        )
        editor = RuleBackend({"### rewritten feedback": rewritten}, name="editor")
        partition = build_validator_pairs(
            oldest_ctx.sample,
            oldest_ctx,
            _actions([SELECTION_OK], AgentKind.VALIDATOR_SELECTION),
            _actions([vague], AgentKind.VALIDATOR_CONDITION),
            fixer,
            _planner(YOUNGEST),
            GoldCache(),
            editor=editor,
        )
        assert partition.assistant_chosen == (rewritten,)
        assert partition.chosen_condition == (rewritten,)
        assert partition.rejected_condition == (vague,)
        assert partition.rejected_selection == (SELECTION_OK,)
        assert editor.call_count == 1
        assert fixer.call_count == 2


def test_pairs_file(tmp_path: Path) -> None:
    pairs = [
        PreferencePair(
            agent=AgentKind.FIX,
            prompt="p",
            chosen=fenced(OLDEST),
            rejected=r,
            sample_id="1",
            iteration=2,
        )
        for r in (fenced(YOUNGEST), "")
    ]
    path = tmp_path / "iteration_2" / "fix.jsonl"
    assert emit_pairs(pairs, path) == 2
    assert read_pairs(path) == pairs
    assert set(json.loads(path.read_text().splitlines()[0])) == {
        "agent",
        "prompt",
        "chosen",
        "rejected",
        "sample_id",
        "iteration",
    }


def test_pair_sides_differ() -> None:
    with pytest.raises(ValidationError):
        PreferencePair(
            agent=AgentKind.PLANNER,
            prompt="p",
            chosen="same",
            rejected="same",
            sample_id="1",
            iteration=1,
        )


@pytest.mark.parametrize(
    "previous,current,change",
    [(10, 10, 0.0), (100, 96, 0.04), (100, 120, 0.2), (0, 0, 0.0)],
)
def test_relative_change(previous: int, current: int, change: float) -> None:
    assert relative_change(previous, current) == pytest.approx(change)


def test_growth_from_zero_has_no_relative_change() -> None:
    assert relative_change(0, 5) is None


@pytest.mark.parametrize(
    "previous,current,stop",
    [(None, 5, False), (100, 96, True), (100, 95, False), (0, 5, False), (7, 7, True)],
)
def test_should_stop(previous: int | None, current: int, stop: bool) -> None:
    assert should_stop(previous, current) == stop


def test_manifest_replaces_iteration(tmp_path: Path) -> None:
    def record(iteration: int, total: int) -> IterationRecord:
        return IterationRecord(
            iteration=iteration, pair_counts={AgentKind.PLANNER: total}, total=total
        )

    manifest = IterationManifest().with_record(record(2, 8)).with_record(record(1, 5))
    manifest = manifest.with_record(record(2, 9))
    assert [r.iteration for r in manifest.iterations] == [1, 2]
    assert manifest.get(2) is not None and manifest.get(2).total == 9
    manifest.write(tmp_path / "manifest.json")
    assert IterationManifest.load(tmp_path / "manifest.json") == manifest
    assert IterationManifest.load(tmp_path / "missing.json") == IterationManifest()


def _iteration_backends() -> Backends:
    def france(request: GenerationRequest) -> list[str]:
        if request.greedy:
            return [fenced(FRANCE_COUNT)]
        wrong = [
            fenced("SELECT count(*) FROM singer"),
            fenced("SELECT count(*) FROM singer WHERE country = 'Netherlands'"),
        ]
        return cycled(wrong, request.n)

    def oldest_validator(request: GenerationRequest) -> list[str]:
        if "### task: validator_condition" in request.prompt:
            return cycled([SORT_WRONG, COND_OK], request.n)
        return [SELECTION_OK] * request.n

    planner = RuleBackend(
        {
            "How many singers are from France?": france,
            "oldest singer": fenced(YOUNGEST),
        },
        name="planner",
    )
    validator = RuleBackend(
        {YOUNGEST: oldest_validator, "### feedback": COND_OK}, name="validator"
    )
    fixer = RuleBackend(
        {"sort descending": [fenced(OLDEST), fenced(YOUNGEST)]}, name="fix"
    )
    advanced = RuleBackend(
        {"oldest": fenced(OLDEST), "France": fenced(FRANCE_COUNT)}, name="advanced"
    )
    return Backends(planner=planner, validator=validator, fix=fixer, advanced=advanced)


class TestRunIteration:
    @staticmethod
    def _config(tmp_path: Path, db_root: Path, **knobs: float) -> RunConfig:
        dataset = tmp_path / "train.json"
        records = [
            SAMPLES[0],
            SAMPLES[1],
            {"question_id": 9, "db_id": "concert_singer", "question": "Who sings?"},
        ]
        dataset.write_text(json.dumps(records), encoding="utf-8")
        settings = {"candidates": 3, "temperature": 0.8, **knobs}
        return RunConfig(
            dataset=dataset, db_root=db_root, output_dir=tmp_path / "rlef", **settings
        )

    def test_pair_counts(self, tmp_path: Path, db_root: Path) -> None:
        config = self._config(tmp_path, db_root)
        record = run_iteration(config, 1, _iteration_backends(), progress=False)
        assert record.pair_counts == {
            AgentKind.PLANNER: 3,
            AgentKind.VALIDATOR_SELECTION: 0,
            AgentKind.VALIDATOR_CONDITION: 1,
            AgentKind.FIX: 1,
        }
        assert record.total == 5
        assert (record.samples, record.skipped) == (3, 1)
        assert record.relative_change is None and not record.stop

        iteration_dir = tmp_path / "rlef" / "iteration_1"
        planner_pairs = read_pairs(iteration_dir / "planner.jsonl")
        assert [p.sample_id for p in planner_pairs] == ["0", "0", "1"]
        assert planner_pairs[2].chosen == fenced(OLDEST)
        fix_pairs = read_pairs(iteration_dir / "fix.jsonl")
        assert [(p.chosen, p.rejected) for p in fix_pairs] == [
            (fenced(OLDEST), fenced(YOUNGEST))
        ]
        assert SORT_WRONG in fix_pairs[0].prompt
        assert (iteration_dir / "validator_selection.jsonl").read_text() == ""

    def test_second_iteration_recommends_stop(
        self, tmp_path: Path, db_root: Path
    ) -> None:
        config = self._config(tmp_path, db_root)
        run_iteration(config, 1, _iteration_backends(), progress=False)
        record = run_iteration(config, 2, _iteration_backends(), progress=False)
        assert record.relative_change == 0.0
        assert record.stop
        manifest = IterationManifest.load(tmp_path / "rlef" / "iteration_manifest.json")
        assert [r.iteration for r in manifest.iterations] == [1, 2]

    @pytest.mark.parametrize("knobs", [{"candidates": 1}, {"temperature": 0.0}])
    def test_sampling_knobs(self, tmp_path: Path, db_root: Path, knobs: dict) -> None:
        config = self._config(tmp_path, db_root, **knobs)
        with pytest.raises(ConfigError):
            run_iteration(config, 1, _iteration_backends(), progress=False)
