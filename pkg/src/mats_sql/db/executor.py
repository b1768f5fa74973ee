"""Read-only SQL execution, result normalization and execution-equivalence.

Comparison rules:

* only two ``ok`` responses can match; a syntax error never matches anything
* column arity must agree and column order is significant
* rows compare as sequences when order matters, as multisets otherwise
* reals compare with ``|x - y| <= 1e-6 * max(1, |x|, |y|)``, everything else exactly

Order matters exactly when the gold query has an outer ORDER BY
(see ``order_sensitive_for``).
"""

import hashlib
import logging
import math
import statistics
import time
from collections import Counter, deque
from pathlib import Path
from typing import Any, Callable, Sequence

from sqlalchemy.exc import DBAPIError, SQLAlchemyError

from mats_sql.constants import DEFAULT_TIMEOUT, REAL_TOLERANCE, Status
from mats_sql.db.manager import readonly_engine
from mats_sql.db.traits import classify_sql, is_write_statement
from mats_sql.errors import ExecutionError
from mats_sql.models import ExecutionResponse, NormalizedTable, Row, Scalar

logger = logging.getLogger(__name__)

READ_ONLY_MESSAGE = "read-only"
# sqlite VM instructions between two deadline checks
PROGRESS_INTERVAL = 1000


def normalize_scalar(value: Any) -> Scalar:
    """Map a driver value onto {null, integer, real, text, blob digest}."""
    if value is None or isinstance(value, str):
        return value
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        return value if math.isfinite(value) else str(value)
    if isinstance(value, (bytes, bytearray, memoryview)):
        return "blob:sha256:" + hashlib.sha256(bytes(value)).hexdigest()
    return str(value)


def normalize_rows(rows: Sequence[Sequence[Any]]) -> NormalizedTable:
    return tuple(tuple(normalize_scalar(v) for v in row) for row in rows)


def execute_sql(
    db_path: str | Path, sql: str, timeout: float = DEFAULT_TIMEOUT
) -> ExecutionResponse:
    """Execute one statement on a read-only connection.

    The deadline is enforced with a SQLite progress handler, so a runaway
    query is interrupted inside the engine rather than abandoned.

    Args:
        db_path (str | Path): SQLite file.
        sql (str): statement to run.
        timeout (float): wall-clock limit in seconds.

    Raises:
        DatabaseNotFoundError: file missing.
        ValueError: timeout is not positive.

    Returns:
        ExecutionResponse: ok with rows, syntax_error with the engine message,
            or timeout.
    """
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    start = time.perf_counter()
    if not sql or not sql.strip():
        return ExecutionResponse(
            status=Status.SYNTAX_ERROR, error_text="empty statement", duration=0.0
        )
    if is_write_statement(sql):
        return ExecutionResponse(
            status=Status.SYNTAX_ERROR,
            error_text=READ_ONLY_MESSAGE,
            duration=time.perf_counter() - start,
        )

    engine = readonly_engine(db_path)
    interrupted = False
    try:
        with engine.connect() as connection:
            driver_connection = connection.connection.driver_connection
            start = time.perf_counter()
            deadline = start + timeout

            def _progress() -> int:
                nonlocal interrupted
                if time.perf_counter() > deadline:
                    interrupted = True
                    return 1
                return 0

            driver_connection.set_progress_handler(_progress, PROGRESS_INTERVAL)
            try:
                result = connection.exec_driver_sql(sql)
                rows = result.fetchall() if result.returns_rows else []
            except SQLAlchemyError as e:
                duration = time.perf_counter() - start
                if interrupted:
                    return ExecutionResponse(status=Status.TIMEOUT, duration=duration)
                return ExecutionResponse(
                    status=Status.SYNTAX_ERROR,
                    error_text=_error_text(e),
                    duration=duration,
                )
            finally:
                driver_connection.set_progress_handler(None, 0)
            duration = time.perf_counter() - start
    finally:
        engine.dispose()

    return ExecutionResponse(
        status=Status.OK, rows=normalize_rows(rows), duration=duration
    )


def _error_text(exc: SQLAlchemyError) -> str:
    message = str(exc.orig) if isinstance(exc, DBAPIError) else str(exc)
    if "readonly database" in message:
        return READ_ONLY_MESSAGE
    return message


def _scalar_equal(x: Scalar, y: Scalar) -> bool:
    if isinstance(x, float) or isinstance(y, float):
        if isinstance(x, (int, float)) and isinstance(y, (int, float)):
            return abs(x - y) <= REAL_TOLERANCE * max(1.0, abs(x), abs(y))
        return False
    return type(x) is type(y) and x == y


def _row_equal(a: Row, b: Row) -> bool:
    return len(a) == len(b) and all(_scalar_equal(x, y) for x, y in zip(a, b))


def _has_real(rows: NormalizedTable) -> bool:
    return any(isinstance(v, float) for row in rows for v in row)


def _perfect_matching(
    left: Sequence[Row], right: Sequence[Row], equal: Callable[[Row, Row], bool]
) -> bool:
    """Bipartite row matching by augmenting paths; tolerance is not transitive."""
    n = len(left)
    adjacency = [[j for j in range(n) if equal(left[i], right[j])] for i in range(n)]
    match_left = [-1] * n
    match_right = [-1] * n
    for i in range(n):
        if not adjacency[i]:
            return False
        parent: dict[int, int] = {}
        queue = deque([i])
        found = -1
        while queue and found < 0:
            u = queue.popleft()
            for j in adjacency[u]:
                if j in parent:
                    continue
                parent[j] = u
                if match_right[j] < 0:
                    found = j
                    break
                queue.append(match_right[j])
        if found < 0:
            return False
        j = found
        while True:
            u = parent[j]
            next_j = match_left[u]
            match_right[j] = u
            match_left[u] = j
            if u == i:
                break
            j = next_j
    return True


def responses_match(
    a: ExecutionResponse, b: ExecutionResponse, order_sensitive: bool = False
) -> bool:
    """Execution equivalence of two responses (see module docstring)."""
    if not (a.ok and b.ok):
        return False
    rows_a = a.rows or ()
    rows_b = b.rows or ()
    if len(rows_a) != len(rows_b):
        return False
    if rows_a and len(rows_a[0]) != len(rows_b[0]):
        return False
    if order_sensitive:
        return all(_row_equal(x, y) for x, y in zip(rows_a, rows_b))
    if Counter(rows_a) == Counter(rows_b):
        return True
    if not (_has_real(rows_a) or _has_real(rows_b)):
        return False
    return _perfect_matching(rows_a, rows_b, _row_equal)


def order_sensitive_for(gold_sql: str) -> bool:
    """Rows are compared in order only when the gold query sorts its outer result."""
    return classify_sql(gold_sql).has_order_by_outer


def time_execution(
    db_path: str | Path, sql: str, repeats: int = 1, timeout: float = DEFAULT_TIMEOUT
) -> float:
    """Median wall-clock duration of ``repeats`` sequential runs.

    Raises:
        ExecutionError: a run did not finish ok.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    durations = []
    for _ in range(repeats):
        response = execute_sql(db_path, sql, timeout)
        if not response.ok:
            raise ExecutionError(
                f"timing run failed with {response.status}: {response.error_text or ''}"
            )
        durations.append(response.duration)
    logger.debug("Timed %d runs of %r: %s", repeats, sql, durations)
    return statistics.median(durations)
