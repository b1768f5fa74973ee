"""Run configuration.

Sources, lowest to highest precedence: defaults in ``constants``, an optional
YAML file, command-line overrides and, for endpoint roles, the environment::

    MATS_<ROLE>_URL, MATS_<ROLE>_MODEL, MATS_<ROLE>_API_KEY (fallback OPENAI_API_KEY)

ROLE is one of PLANNER, VALIDATOR, FIX, SELECTION, ADVANCED, EDITOR.
"""

import logging
import os
from pathlib import Path
from typing import Any, Iterable, Literal, Mapping, Optional

import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    SecretStr,
    ValidationError,
    field_validator,
    model_validator,
)

from mats_sql.constants import (
    DEFAULT_BACKEND_TIMEOUT,
    DEFAULT_CANDIDATES,
    DEFAULT_CATALOG_CAP,
    DEFAULT_MAX_COLUMNS_PER_TABLE,
    DEFAULT_MAX_NEW_TOKENS,
    DEFAULT_MAX_TABLES,
    DEFAULT_ORPO_LAMBDA,
    DEFAULT_PARALLELISM,
    DEFAULT_RETRIES,
    DEFAULT_SELECTION_CHUNK,
    DEFAULT_TEMPERATURE,
    DEFAULT_TIMEOUT,
    DEFAULT_TOP_K_VALUES,
    DEFAULT_VES_REPEATS,
    RUNS_FOLDER,
    BackendRole,
)
from mats_sql.errors import ConfigError

logger = logging.getLogger(__name__)

ENV_PREFIX = "MATS"


class BackendConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["openai", "scripted"] = "openai"
    url: Optional[str] = None
    model: Optional[str] = None
    api_key: Optional[SecretStr] = Field(default=None, exclude=True)
    fixture: Optional[Path] = None
    timeout: float = Field(default=DEFAULT_BACKEND_TIMEOUT, gt=0)
    retries: int = Field(default=DEFAULT_RETRIES, ge=0)

    @model_validator(mode="after")
    def _kind_fields(self) -> "BackendConfig":
        if self.kind == "openai" and not self.model:
            raise ValueError("openai backends need a model name")
        if self.kind == "scripted":
            if self.fixture is None:
                raise ValueError("scripted backends need a fixture file")
            if not self.fixture.is_file():
                raise ValueError(f"fixture {self.fixture} does not exist")
        return self


class RunConfig(BaseModel):
    """Effective configuration of one command; written verbatim beside its outputs."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    dataset: Path
    db_root: Path
    backends: dict[BackendRole, BackendConfig] = Field(default_factory=dict)
    candidates: int = Field(default=DEFAULT_CANDIDATES, ge=1)
    temperature: float = Field(default=DEFAULT_TEMPERATURE, ge=0)
    top_k_values: int = Field(default=DEFAULT_TOP_K_VALUES, ge=1)
    selection_chunk: int = Field(default=DEFAULT_SELECTION_CHUNK, ge=2)
    max_tables: int = Field(default=DEFAULT_MAX_TABLES, ge=1)
    max_columns_per_table: int = Field(default=DEFAULT_MAX_COLUMNS_PER_TABLE, ge=1)
    timeout: float = Field(default=DEFAULT_TIMEOUT, gt=0)
    catalog_cap: int = Field(default=DEFAULT_CATALOG_CAP, ge=1)
    max_new_tokens: int = Field(default=DEFAULT_MAX_NEW_TOKENS, ge=1)
    stop: Optional[tuple[str, ...]] = None
    parallelism: int = Field(default=DEFAULT_PARALLELISM, ge=1)
    orpo_lambda: float = Field(default=DEFAULT_ORPO_LAMBDA, ge=0)
    ves_repeats: int = Field(default=DEFAULT_VES_REPEATS, ge=1)
    ranker_scores: Optional[Path] = None
    output_dir: Path = Path(RUNS_FOLDER) / "default"
    seed_label: str = "default"

    @field_validator("dataset")
    @classmethod
    def _dataset_exists(cls, value: Path) -> Path:
        if not value.is_file():
            raise ValueError(f"dataset file {value} does not exist")
        return value

    @field_validator("db_root")
    @classmethod
    def _db_root_exists(cls, value: Path) -> Path:
        if not value.is_dir():
            raise ValueError(f"database root {value} is not a directory")
        return value

    @field_validator("ranker_scores")
    @classmethod
    def _scores_exist(cls, value: Optional[Path]) -> Optional[Path]:
        if value is not None and not value.is_file():
            raise ValueError(f"scores file {value} does not exist")
        return value

    def backend(self, role: BackendRole) -> Optional[BackendConfig]:
        return self.backends.get(role)

    def require_roles(self, roles: Iterable[BackendRole]) -> None:
        """Raises ConfigError naming the first role without a backend."""
        for role in roles:
            if role not in self.backends:
                raise ConfigError(f"backends.{role}", "no backend configured")

    def snapshot_json(self) -> str:
        """Configuration as written to config.json; API keys are never included."""
        return self.model_dump_json(indent=2)

    def write_snapshot(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wt", encoding="utf-8") as f:
            f.write(self.snapshot_json())
            f.write("\n")


def _merge(base: dict[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = _merge(dict(merged[key]), value)
        else:
            merged[key] = value
    return merged


def _env_backends(
    backends: dict[str, Any], env: Mapping[str, str]
) -> dict[str, Any]:
    backends = {role: dict(cfg) for role, cfg in backends.items()}
    fallback_key = env.get("OPENAI_API_KEY")
    for role in BackendRole:
        prefix = f"{ENV_PREFIX}_{role.upper()}_"
        url = env.get(prefix + "URL")
        model = env.get(prefix + "MODEL")
        api_key = env.get(prefix + "API_KEY")
        current = backends.get(role.value)
        if current is not None and current.get("kind") == "scripted":
            continue
        if url or model:
            current = {**(current or {}), "kind": "openai"}
            if url:
                current["url"] = url
            if model:
                current["model"] = model
        if current is None:
            continue
        if api_key or (fallback_key and not current.get("api_key")):
            current["api_key"] = api_key or fallback_key
        backends[role.value] = current
    return backends


def load_config(
    path: Optional[str | Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    env: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Build and validate a RunConfig.

    Args:
        path (Optional[str | Path]): YAML config file.
        overrides (Optional[Mapping[str, Any]]): command-line values; None is
            ignored.
        env (Optional[Mapping[str, str]]): environment, defaults to ``os.environ``.

    Raises:
        ConfigError: invalid configuration, naming the offending field.

    Returns:
        RunConfig: validated configuration.
    """
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rt", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError("config", f"cannot read {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("config", f"{path} must hold a mapping")
    data = _merge(data, overrides or {})
    data["backends"] = _env_backends(
        data.get("backends") or {}, os.environ if env is None else env
    )
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError.from_validation(e) from e
    logger.debug("Effective configuration: %s", config.snapshot_json())
    return config
