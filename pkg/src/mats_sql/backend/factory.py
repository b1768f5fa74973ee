from mats_sql.backend.base import Backend
from mats_sql.backend.openai_backend import OpenAIBackend
from mats_sql.backend.scripted import ScriptedBackend
from mats_sql.config import BackendConfig


def build_backend(config: BackendConfig, name: str = "backend") -> Backend:
    """Instantiate the backend described by ``config``."""
    if config.kind == "scripted":
        assert config.fixture is not None
        return ScriptedBackend.from_fixture(config.fixture, name=name)
    assert config.model is not None
    return OpenAIBackend(
        base_url=config.url,
        model=config.model,
        api_key=config.api_key.get_secret_value() if config.api_key else None,
        timeout=config.timeout,
        retries=config.retries,
        name=name,
    )
