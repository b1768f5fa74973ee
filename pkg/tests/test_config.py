from pathlib import Path

import pytest
import yaml

from mats_sql.config import load_config
from mats_sql.constants import BackendRole
from mats_sql.errors import ConfigError


def _base(dataset: Path, db_root: Path) -> dict[str, str]:
    return {"dataset": str(dataset), "db_root": str(db_root)}


def test_defaults(dataset: Path, db_root: Path) -> None:
    config = load_config(overrides=_base(dataset, db_root), env={})
    assert config.candidates == 10
    assert config.temperature == 1.0
    assert config.top_k_values == 2
    assert config.backends == {}


def test_command_line_beats_file(tmp_path: Path, dataset: Path, db_root: Path) -> None:
    path = tmp_path / "run.yaml"
    path.write_text(
        yaml.safe_dump({**_base(dataset, db_root), "candidates": 4, "temperature": 0.7})
    )
    config = load_config(path, overrides={"candidates": 6, "temperature": None}, env={})
    assert config.candidates == 6
    assert config.temperature == 0.7


def test_environment_backends(dataset: Path, db_root: Path) -> None:
    env = {
        "MATS_PLANNER_URL": "http://localhost:8000/v1",
        "MATS_PLANNER_MODEL": "planner-7b",
        "OPENAI_API_KEY": "sk-secret",
    }
    config = load_config(overrides=_base(dataset, db_root), env=env)
    planner = config.backend(BackendRole.PLANNER)
    assert planner is not None
    assert planner.url == "http://localhost:8000/v1"
    assert planner.api_key is not None
    assert planner.api_key.get_secret_value() == "sk-secret"
    assert config.backend(BackendRole.FIX) is None
    assert "sk-secret" not in config.snapshot_json()


def test_scripted_backends_ignore_environment(
    tmp_path: Path, dataset: Path, db_root: Path
) -> None:
    fixture = tmp_path / "planner.json"
    fixture.write_text("{}")
    config = load_config(
        overrides={
            **_base(dataset, db_root),
            "backends": {"planner": {"kind": "scripted", "fixture": str(fixture)}},
        },
        env={"MATS_PLANNER_MODEL": "planner-7b"},
    )
    planner = config.backend(BackendRole.PLANNER)
    assert planner is not None and planner.kind == "scripted"


@pytest.mark.parametrize(
    "overrides,field",
    [
        ({"candidates": 0}, "candidates"),
        ({"dataset": "missing.json"}, "dataset"),
        ({"selection_chunk": 1}, "selection_chunk"),
        ({"backends": {"fix": {"kind": "scripted"}}}, "backends"),
    ],
)
def test_invalid_values_name_the_field(
    dataset: Path, db_root: Path, overrides: dict, field: str
) -> None:
    with pytest.raises(ConfigError) as e:
        load_config(overrides={**_base(dataset, db_root), **overrides}, env={})
    assert e.value.field.startswith(field)


def test_unreadable_file(tmp_path: Path) -> None:
    path = tmp_path / "run.yaml"
    path.write_text("- a list\n- not a mapping\n")
    with pytest.raises(ConfigError):
        load_config(path, env={})


def test_require_roles(dataset: Path, db_root: Path) -> None:
    config = load_config(overrides=_base(dataset, db_root), env={})
    with pytest.raises(ConfigError) as e:
        config.require_roles([BackendRole.SELECTION])
    assert e.value.field == "backends.selection"


def test_snapshot_written(tmp_path: Path, dataset: Path, db_root: Path) -> None:
    config = load_config(overrides=_base(dataset, db_root), env={})
    config.write_snapshot(tmp_path / "out" / "config.json")
    assert '"candidates": 10' in (tmp_path / "out" / "config.json").read_text()
