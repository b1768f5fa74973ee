from mats_sql.db.executor import (
    execute_sql,
    order_sensitive_for,
    responses_match,
    time_execution,
)
from mats_sql.db.introspect import build_value_catalog, introspect_schema
from mats_sql.db.manager import resolve_db_path
from mats_sql.db.samples import load_samples
from mats_sql.db.traits import SqlTraits, classify_sql

__all__ = [
    "SqlTraits",
    "build_value_catalog",
    "classify_sql",
    "execute_sql",
    "introspect_schema",
    "load_samples",
    "order_sensitive_for",
    "resolve_db_path",
    "responses_match",
    "time_execution",
]
