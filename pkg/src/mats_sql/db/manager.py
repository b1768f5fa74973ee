import logging
from pathlib import Path
from urllib.parse import quote

from sqlalchemy import Engine, create_engine
from sqlalchemy.pool import NullPool

from mats_sql.errors import DatabaseNotFoundError

logger = logging.getLogger(__name__)


def resolve_db_path(db_root: str | Path, db_id: str) -> Path:
    """BIRD/Spider layout: <db_root>/<db_id>/<db_id>.sqlite."""
    return Path(db_root) / db_id / f"{db_id}.sqlite"


def readonly_engine(db_path: str | Path) -> Engine:
    """Create an engine that opens ``db_path`` read-only.

    Every connection is fresh (NullPool) so callers never share SQLite
    handles across threads.

    Raises:
        DatabaseNotFoundError: file does not exist.
    """
    path = Path(db_path)
    if not path.is_file():
        raise DatabaseNotFoundError(f"database file {path} not found")
    uri = quote(str(path.resolve()), safe="/:")
    engine = create_engine(
        f"sqlite:///file:{uri}?mode=ro&uri=true",
        poolclass=NullPool,
        connect_args={"check_same_thread": False},
    )
    logger.debug("Read-only engine for %s", path)
    return engine

