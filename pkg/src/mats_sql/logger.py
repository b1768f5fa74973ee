import json
import logging
import logging.config
import os
from datetime import datetime, timezone
from typing import Any, Optional

from yaml import safe_load

# attributes every LogRecord has; everything else came in through `extra=`
_RESERVED = set(
    logging.LogRecord("", 0, "", 0, "", None, None).__dict__.keys()
) | {"message", "asctime"}


class JsonLinesFormatter(logging.Formatter):
    """One JSON object per record; values passed via ``extra`` become fields."""

    def format(self, record: logging.LogRecord) -> str:
        entry: dict[str, Any] = {
            "time": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        for key, value in record.__dict__.items():
            if key not in _RESERVED and not key.startswith("_"):
                entry[key] = value
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry, default=str, ensure_ascii=False)


def setup_logging(
    path: Optional[str] = None, default_level: int = logging.INFO
) -> None:
    """Setup logging configuration

    If no path is set, the packaged logging_config.yaml is used.

    Args:
        path (Optional[str], optional): Logging config yaml. Defaults to None.
        default_level (int, optional): Default logging level. Defaults to logging.INFO.
    """
    if not path:
        path = os.path.join(os.path.dirname(__file__), "logging_config.yaml")
    if os.path.exists(path):
        with open(path, "rt") as f:
            config = safe_load(f.read())
        logging.config.dictConfig(config)
    else:
        logging.basicConfig(level=default_level)


def add_jsonl_handler(path: str, level: int = logging.DEBUG) -> logging.Handler:
    """Attach a JSON-lines file handler to the package logger and return it."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    handler = logging.FileHandler(path, mode="a", encoding="utf-8")
    handler.setLevel(level)
    handler.setFormatter(JsonLinesFormatter())
    logging.getLogger("mats_sql").addHandler(handler)
    return handler
