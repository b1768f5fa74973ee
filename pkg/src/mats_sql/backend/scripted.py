"""Fixture-driven backend for deterministic runs and tests.

Fixture file::

    {
      "template_version": "v1",
      "responses": {
        "<digest>:<n>:<temperature bucket>": ["completion", ...],
        "<digest>": ["completion", ...]
      }
    }

A plain ``{key: [...]}`` object is accepted as well. Full keys win over
bare digests. Every request consumes ``n`` queued completions in order.
"""

import json
import logging
import threading
from collections import deque
from pathlib import Path
from typing import Mapping, Sequence

from mats_sql.backend.base import (
    GenerationRequest,
    GenerationResult,
    prompt_digest,
    request_key,
)
from mats_sql.constants import TEMPLATE_VERSION
from mats_sql.errors import BackendError, FixtureMissError

logger = logging.getLogger(__name__)


class ScriptedBackend:
    def __init__(
        self, responses: Mapping[str, Sequence[str]], name: str = "scripted"
    ) -> None:
        self.name = name
        self._queues = {key: deque(texts) for key, texts in responses.items()}
        self._lock = threading.Lock()
        self.prompts: dict[str, str] = {}
        self.requests: list[GenerationRequest] = []

    @classmethod
    def from_fixture(
        cls, path: str | Path, name: str = "scripted"
    ) -> "ScriptedBackend":
        """Load a fixture file.

        Raises:
            BackendError: fixture is malformed or pinned to another template version.
        """
        with open(path, "rt", encoding="utf-8") as f:
            data = json.load(f)
        if not isinstance(data, dict):
            raise BackendError(f"fixture {path} must be a JSON object")
        if "responses" in data:
            version = data.get("template_version", TEMPLATE_VERSION)
            if version != TEMPLATE_VERSION:
                raise BackendError(
                    f"fixture {path} targets templates {version}, "
                    f"installed templates are {TEMPLATE_VERSION}"
                )
            data = data["responses"]
        for key, texts in data.items():
            if not isinstance(texts, list) or not all(
                isinstance(t, str) for t in texts
            ):
                raise BackendError(
                    f"fixture {path}: entry {key} is not a list of strings"
                )
        logger.info("Loaded scripted fixture %s with %d keys", path, len(data))
        return cls(data, name=name)

    def generate(self, request: GenerationRequest) -> GenerationResult:
        key = request_key(request)
        digest = prompt_digest(request.prompt)
        with self._lock:
            self.requests.append(request)
            self.prompts[key] = request.prompt
            queue = self._queues.get(key)
            if queue is None:
                queue = self._queues.get(digest)
            if queue is None or len(queue) < request.n:
                raise FixtureMissError(key)
            texts = tuple(queue.popleft() for _ in range(request.n))
        return GenerationResult(completions=texts)

    @property
    def call_count(self) -> int:
        return len(self.requests)

    def remaining(self) -> dict[str, int]:
        with self._lock:
            return {key: len(queue) for key, queue in self._queues.items()}

    def write_manifest(self, path: str | Path) -> None:
        """Write every prompt seen so far, keyed like fixture entries."""
        with self._lock:
            manifest = dict(sorted(self.prompts.items()))
        with open(path, "wt", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, ensure_ascii=False)
            f.write("\n")
        logger.info("Wrote prompt manifest with %d entries to %s", len(manifest), path)
