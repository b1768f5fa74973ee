"""Benchmark sample loading.

Field mapping of the JSON or JSON-lines records (BIRD and Spider shapes):

| record field                | QuestionSample field |
|-----------------------------|----------------------|
| `question`                  | question (required)  |
| `db_id`                     | db_id (required)     |
| `evidence`                  | evidence             |
| `SQL` or `query`            | gold_sql             |
| `difficulty`                | difficulty           |
| `question_id` or `id`       | id (default: index)  |
"""

import json
import logging
from pathlib import Path
from typing import Any, Iterable

from pydantic import ValidationError

from mats_sql.errors import DatasetError
from mats_sql.models import QuestionSample

logger = logging.getLogger(__name__)

GOLD_FIELDS = ("SQL", "query")
ID_FIELDS = ("question_id", "id")


def _first(record: dict[str, Any], fields: Iterable[str]) -> Any:
    for field in fields:
        value = record.get(field)
        if value is not None:
            return value
    return None


def sample_from_record(record: Any, index: int) -> QuestionSample:
    if not isinstance(record, dict):
        raise DatasetError("record is not an object", index=index)
    for field in ("question", "db_id"):
        if not record.get(field):
            raise DatasetError(f"missing field '{field}'", index=index, field=field)
    sample_id = _first(record, ID_FIELDS)
    evidence = record.get("evidence") or None
    try:
        return QuestionSample(
            id=str(sample_id if sample_id is not None else index),
            question=str(record["question"]),
            db_id=str(record["db_id"]),
            evidence=evidence,
            gold_sql=_first(record, GOLD_FIELDS),
            difficulty=record.get("difficulty"),
        )
    except ValidationError as e:
        raise DatasetError(str(e), index=index) from e


def _read_json_lines(path: str | Path) -> list[Any]:
    records = []
    with open(path, "rt", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise DatasetError(
                    f"{path} line {line_no} is not valid JSON: {e}",
                    index=len(records),
                ) from e
    return records


def _read_json_array(path: str | Path) -> list[Any]:
    with open(path, "rt", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise DatasetError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(data, list):
        raise DatasetError(f"{path} must contain a JSON array of records")
    return data


def load_samples(path: str | Path) -> list[QuestionSample]:
    """Load BIRD/Spider-shaped question records.

    A ``.jsonl`` file holds one record per line (blank lines are skipped);
    any other file must hold a JSON array of records.

    Args:
        path (str | Path): JSON or JSON-lines file.

    Raises:
        DatasetError: unreadable file or malformed record (message carries
            the record index and missing field).

    Returns:
        list[QuestionSample]: one sample per record, in file order.
    """
    if Path(path).suffix.lower() == ".jsonl":
        data = _read_json_lines(path)
    else:
        data = _read_json_array(path)
    samples = [sample_from_record(record, i) for i, record in enumerate(data)]
    ids = [s.id for s in samples]
    if len(set(ids)) != len(ids):
        raise DatasetError(f"{path} contains duplicate sample ids")
    logger.info("Loaded %d samples from %s", len(samples), path)
    return samples
