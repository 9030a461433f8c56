"""Engine assembly: database discovery, index cache, provider, generators.

One runtime owns read-only state (schemas, indexes, projection head) and
hands out per-question pipeline dependencies. Databases live under a root
directory either as ``<db_id>/<db_id>.sqlite`` or flat ``<db_id>.sqlite``;
a ``<db_id>/overlay.json`` description overlay is picked up when present.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .contrastive import ProjectionHead, head_fingerprint
from .corpus import QuestionRecord, load_overlay
from .embeddings import EmbeddingProviderConfig, provider_from_config
from .errors import SquillError
from .fixtures import load_plan
from .generator import GeneratorConfig, ScriptedGenerator, make_generator
from .index import build_index, load_index, read_fingerprint, save_index
from .pipeline import DEFAULT_MAX_ITERATIONS, PipelineDeps, answer_question, run_batch
from .retriever import DEFAULT_K
from .schema import introspect_schema

log = logging.getLogger(__name__)


@dataclass
class RuntimeConfig:
    databases_dir: Path
    index_dir: Path | None = None
    provider: EmbeddingProviderConfig = field(default_factory=EmbeddingProviderConfig)
    generator: GeneratorConfig | None = None
    plan_path: Path | None = None
    head_path: Path | None = None
    k: int = DEFAULT_K
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    timeout: float = 30.0
    row_cap: int = 500
    host: str = "127.0.0.1"
    port: int = 8099
    static_dir: Path | None = None

    @classmethod
    def from_file(cls, path) -> "RuntimeConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        provider = EmbeddingProviderConfig(**raw.get("provider", {}))
        generator = GeneratorConfig(**raw["generator"]) if raw.get("generator") else None
        env = os.environ
        return cls(
            databases_dir=Path(env.get("SQUILL_DATABASES_DIR", raw["databases_dir"])),
            index_dir=Path(env["SQUILL_INDEX_DIR"]) if "SQUILL_INDEX_DIR" in env
            else (Path(raw["index_dir"]) if raw.get("index_dir") else None),
            provider=provider,
            generator=generator,
            plan_path=Path(raw["plan_path"]) if raw.get("plan_path") else None,
            head_path=Path(raw["head_path"]) if raw.get("head_path") else None,
            k=int(raw.get("k", DEFAULT_K)),
            max_iterations=int(raw.get("max_iterations", DEFAULT_MAX_ITERATIONS)),
            timeout=float(raw.get("timeout", 30.0)),
            row_cap=int(raw.get("row_cap", 500)),
            host=env.get("SQUILL_HOST", raw.get("host", "127.0.0.1")),
            port=int(env.get("SQUILL_PORT", raw.get("port", 8099))),
            static_dir=Path(raw["static_dir"]) if raw.get("static_dir") else None,
        )


def discover_databases(databases_dir) -> dict[str, Path]:
    """Map db_id -> sqlite path for both nested and flat layouts."""
    root = Path(databases_dir)
    if not root.is_dir():
        raise SquillError(f"databases directory {root} does not exist")
    found: dict[str, Path] = {}
    for path in sorted(root.glob("*.sqlite")):
        found[path.stem] = path
    for path in sorted(root.glob("*/*.sqlite")):
        if path.parent.name == path.stem:
            found.setdefault(path.stem, path)
    return found


class EngineRuntime:
    """Loads schemas and indexes lazily; safe for concurrent readers."""

    def __init__(self, cfg: RuntimeConfig):
        self.cfg = cfg
        self.databases = discover_databases(cfg.databases_dir)
        self.provider = provider_from_config(cfg.provider)
        self.head = ProjectionHead.load(cfg.head_path) if cfg.head_path else None
        self._plan = load_plan(cfg.plan_path) if cfg.plan_path else None
        self._generator = make_generator(cfg.generator) if cfg.generator else None
        self._schemas: dict[str, object] = {}
        self._indexes: dict[str, object] = {}
        self._lock = threading.Lock()

    def db_path(self, db_id: str) -> Path:
        if db_id not in self.databases:
            raise KeyError(f"unknown database {db_id!r}")
        return self.databases[db_id]

    def schema(self, db_id: str):
        with self._lock:
            if db_id not in self._schemas:
                path = self.db_path(db_id)
                overlay_path = path.parent / "overlay.json"
                overlay = load_overlay(overlay_path) if overlay_path.exists() else None
                self._schemas[db_id] = introspect_schema(path, db_id=db_id, overlay=overlay)
            return self._schemas[db_id]

    def expected_fingerprint(self) -> str:
        return f"{self.provider.fingerprint}|{head_fingerprint(self.head)}"

    def index(self, db_id: str):
        with self._lock:
            cached = self._indexes.get(db_id)
        if cached is not None:
            return cached
        schema = self.schema(db_id)
        expected = self.expected_fingerprint()
        index = None
        index_path = None
        if self.cfg.index_dir is not None:
            index_path = Path(self.cfg.index_dir) / f"{db_id}.idx"
            if index_path.exists():
                try:
                    if read_fingerprint(index_path) == expected:
                        index = load_index(index_path, expected_fingerprint=expected)
                    else:
                        log.info("%s: stale index (fingerprint changed), rebuilding", db_id)
                except SquillError as exc:
                    log.warning("%s: failed to load index (%s), rebuilding", db_id, exc)
        if index is None:
            index = build_index(schema, self.provider, self.head)
            if index_path is not None:
                index_path.parent.mkdir(parents=True, exist_ok=True)
                save_index(index, index_path)
        with self._lock:
            self._indexes[db_id] = index
        return index

    def generator_for(self, q: QuestionRecord | None):
        if self._plan is not None and q is not None:
            script = self._plan.get(q.question_id)
            if script:
                return ScriptedGenerator(script)
        if self._generator is None:
            raise SquillError("no generator configured")
        return self._generator

    def deps_for(self, q: QuestionRecord, k: int | None = None,
                 max_iterations: int | None = None,
                 retrieval_enabled: bool = True) -> PipelineDeps:
        return PipelineDeps(
            index=self.index(q.db_id),
            schema=self.schema(q.db_id),
            provider=self.provider,
            generator=self.generator_for(q),
            db_path=self.db_path(q.db_id),
            head=self.head,
            k=self.cfg.k if k is None else k,
            max_iterations=self.cfg.max_iterations if max_iterations is None else max_iterations,
            timeout=self.cfg.timeout,
            retrieval_enabled=retrieval_enabled,
        )

    def ask(self, db_id: str, question: str, evidence: str | None = None,
            k: int | None = None, max_iterations: int | None = None,
            question_id: str = "adhoc"):
        q = QuestionRecord(question_id=question_id, db_id=db_id,
                           question=question, evidence=evidence)
        return answer_question(q, self.deps_for(q, k=k, max_iterations=max_iterations))

    def run(self, corpus, parallelism: int = 1, k: int | None = None,
            max_iterations: int | None = None, retrieval_enabled: bool = True):
        def deps(q):
            return self.deps_for(q, k=k, max_iterations=max_iterations,
                                 retrieval_enabled=retrieval_enabled)

        paths = {q.question_id: self.db_path(q.db_id) for q in corpus}
        return run_batch(corpus, deps, parallelism=parallelism,
                         db_path_for=paths, timeout=self.cfg.timeout)
