"""Schema introspection and per-column value catalogs of benchmark databases."""

import logging
from pathlib import Path
from typing import Any

from sqlalchemy import Connection, inspect, text
from sqlalchemy.exc import SQLAlchemyError

from mats_sql.constants import DEFAULT_CATALOG_CAP
from mats_sql.db.manager import readonly_engine
from mats_sql.models import (
    ColumnCatalog,
    ColumnDef,
    ColumnRef,
    ForeignKey,
    SchemaSnapshot,
    TableDef,
    ValueCatalog,
)

logger = logging.getLogger(__name__)


def _quote(connection: Connection, name: str) -> str:
    return connection.dialect.identifier_preparer.quote_identifier(name)


def _table_names(connection: Connection) -> list[str]:
    # storage order; sqlalchemy's inspector sorts by name
    rows = connection.execute(
        text(
            "SELECT name FROM sqlite_master WHERE type = 'table' "
            "AND name NOT LIKE 'sqlite_%' ORDER BY rowid"
        )
    )
    return [row[0] for row in rows]


def _table_def(connection: Connection, name: str) -> TableDef:
    rows = connection.exec_driver_sql(f"PRAGMA table_info({_quote(connection, name)})")
    # cid, name, type, notnull, dflt_value, pk
    columns = [
        ColumnDef(name=row[1], declared_type=row[2] or "", is_primary_key=row[5] > 0)
        for row in rows
    ]
    return TableDef(name=name, columns=tuple(columns))


def _foreign_keys(
    connection: Connection, tables: list[TableDef]
) -> list[ForeignKey]:
    by_name = {t.name.casefold(): t for t in tables}
    inspector = inspect(connection)
    foreign_keys: list[ForeignKey] = []
    for table in tables:
        for fk in inspector.get_foreign_keys(table.name):
            parent = by_name.get(str(fk["referred_table"]).casefold())
            if parent is None:
                logger.warning(
                    "Skipping foreign key of %s to unknown table %s",
                    table.name,
                    fk["referred_table"],
                )
                continue
            referred = list(fk["referred_columns"]) or list(parent.primary_key)
            for child_col, parent_col in zip(fk["constrained_columns"], referred):
                child_def = table.column(child_col)
                parent_def = parent.column(parent_col)
                if child_def is None or parent_def is None:
                    logger.warning(
                        "Skipping foreign key %s.%s -> %s.%s: column not found",
                        table.name,
                        child_col,
                        parent.name,
                        parent_col,
                    )
                    continue
                foreign_keys.append(
                    ForeignKey(
                        table=table.name,
                        column=child_def.name,
                        ref_table=parent.name,
                        ref_column=parent_def.name,
                    )
                )
    return foreign_keys


def introspect_schema(db_path: str | Path) -> SchemaSnapshot:
    """Read tables, columns and foreign keys of a SQLite database.

    Tables come in storage order; columns carry their declared type and
    primary-key flag. Foreign keys whose endpoints cannot be resolved are
    skipped with a warning. A database that only holds views yields an
    empty snapshot.

    Args:
        db_path (str | Path): SQLite file.

    Raises:
        DatabaseNotFoundError: file missing.
        sqlalchemy.exc.DatabaseError: file is unreadable or corrupt.

    Returns:
        SchemaSnapshot: snapshot of the database.
    """
    engine = readonly_engine(db_path)
    try:
        with engine.connect() as connection:
            tables = [_table_def(connection, n) for n in _table_names(connection)]
            foreign_keys = _foreign_keys(connection, tables)
    finally:
        engine.dispose()
    return SchemaSnapshot(tables=tuple(tables), foreign_keys=tuple(foreign_keys))


def catalog_text(value: Any) -> tuple[str, str] | None:
    """Text form and type tag of a catalog value; None for values never shown."""
    if isinstance(value, bool):
        return str(int(value)), "integer"
    if isinstance(value, int):
        return str(value), "integer"
    if isinstance(value, float):
        # repr is the shortest string that round-trips
        return repr(value), "real"
    if isinstance(value, str):
        return value, "text"
    return None


def _scan_order(connection: Connection, table: TableDef) -> str:
    """ORDER BY clause that walks ``table`` in storage order."""
    quoted = _quote(connection, table.name)
    try:
        connection.exec_driver_sql(f"SELECT rowid FROM {quoted} LIMIT 0").fetchall()
        return "rowid"
    except SQLAlchemyError:
        # WITHOUT ROWID tables are stored in primary-key order
        return ", ".join(_quote(connection, c) for c in table.primary_key)


def _column_catalog(
    connection: Connection, ref: ColumnRef, m: int, order: str
) -> ColumnCatalog:
    table = _quote(connection, ref.table)
    column = _quote(connection, ref.column)
    sql = (
        f"SELECT {column} FROM {table} "
        f"WHERE {column} IS NOT NULL AND typeof({column}) != 'blob'"
    )
    if order:
        sql += f" ORDER BY {order}"
    values: dict[str, str] = {}
    complete = True
    result = connection.exec_driver_sql(sql)
    try:
        for (raw,) in result:
            converted = catalog_text(raw)
            if converted is None or converted[0] in values:
                continue
            if len(values) == m:
                complete = False
                break
            values[converted[0]] = converted[1]
    finally:
        result.close()
    return ColumnCatalog(
        column=ref,
        values=tuple(values),
        value_types=tuple(values.values()),
        sampled_complete=complete,
    )


def build_value_catalog(
    db_path: str | Path, snapshot: SchemaSnapshot, m: int = DEFAULT_CATALOG_CAP
) -> ValueCatalog:
    """Collect up to ``m`` distinct non-null values per column in first-seen order.

    Rows are read in storage order, so an index on the column does not
    reorder the values. Blobs are never catalogued and never count
    towards ``m``. A column whose query fails gets an empty list and a
    warning.
    """
    if m < 1:
        raise ValueError("catalog cap m must be positive")
    catalogs: list[ColumnCatalog] = []
    engine = readonly_engine(db_path)
    try:
        with engine.connect() as connection:
            for table in snapshot.tables:
                order = _scan_order(connection, table)
                for column in table.columns:
                    ref = ColumnRef(table=table.name, column=column.name)
                    try:
                        catalogs.append(_column_catalog(connection, ref, m, order))
                    except SQLAlchemyError as e:
                        logger.warning("Catalog query for %s failed: %s", ref.key, e)
                        catalogs.append(
                            ColumnCatalog(column=ref, sampled_complete=False)
                        )
    finally:
        engine.dispose()
    return ValueCatalog(columns=tuple(catalogs))
