import json
from pathlib import Path

import pytest

from mats_sql.agents.prompts import AgentContext
from mats_sql.db.samples import load_samples
from mats_sql.evaluation.metrics import EvalRecord, build_eval_records
from mats_sql.models import QuestionSample
from mats_sql.pipeline.results import PipelineResult
from tests.helpers import (
    FRANCE_COUNT,
    OLDEST,
    SAMPLES,
    SINGERS_2014,
    SINGER_DB,
    create_db,
)


@pytest.fixture()
def db_root(tmp_path: Path) -> Path:
    root = tmp_path / "dbs"
    create_db(root / "concert_singer" / "concert_singer.sqlite", SINGER_DB)
    return root


@pytest.fixture()
def db_path(db_root: Path) -> Path:
    return db_root / "concert_singer" / "concert_singer.sqlite"


@pytest.fixture()
def dataset(tmp_path: Path) -> Path:
    path = tmp_path / "dev.json"
    path.write_text(json.dumps(SAMPLES, indent=2), encoding="utf-8")
    return path


@pytest.fixture()
def samples(dataset: Path) -> list[QuestionSample]:
    return load_samples(dataset)


@pytest.fixture()
def oldest_ctx(samples: list[QuestionSample], db_path: Path) -> AgentContext:
    return AgentContext(
        sample=samples[1],
        schema_prompt=(
            "CREATE TABLE singer (\n  singer_id INTEGER PRIMARY KEY,\n  name TEXT,\n"
            "  country TEXT,\n  age INTEGER\n);"
        ),
        db_path=db_path,
    )


@pytest.fixture()
def predictions() -> list[PipelineResult]:
    predicted = [
        FRANCE_COUNT,
        OLDEST,
        SINGERS_2014,
        "SELECT country FROM singer WHERE name = 'timbaland'",
        None,
    ]
    return [
        PipelineResult(sample_id=str(i), db_id="concert_singer", final_sql=sql)
        for i, sql in enumerate(predicted)
    ]


@pytest.fixture()
def eval_records(
    predictions: list[PipelineResult], samples: list[QuestionSample], db_root: Path
) -> list[EvalRecord]:
    return build_eval_records(predictions, samples, db_root)
