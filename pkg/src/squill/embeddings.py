"""Embedding providers behind one contract: texts in, unit-norm vectors out.

Two implementations: an HTTP client for an embeddings endpoint (request
``{"model": ..., "input": [...]}``, response ``{"data": [{"embedding": ...}]}``)
and a deterministic hashing embedder for tests and fixtures. All vectors are
L2-normalized at this boundary so dot products coincide with cosine
similarity everywhere downstream.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import threading
import time
from dataclasses import dataclass

import numpy as np
import requests

from .errors import ContractError, DegenerateVectorError, TransportError

log = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z0-9]+")

DEFAULT_DIM = 64


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric tokens, split on whitespace and punctuation."""
    return _TOKEN_RE.findall(text.lower())


def normalize(vector) -> np.ndarray:
    """Return vector / ||vector||. Rejects non-finite and all-zero input."""
    arr = np.asarray(vector, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector has non-finite entries")
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise DegenerateVectorError("cannot normalize a zero vector")
    return arr / norm


@dataclass(frozen=True)
class EmbeddingProviderConfig:
    kind: str = "deterministic-test"  # "remote" | "deterministic-test"
    dim: int = DEFAULT_DIM
    endpoint: str | None = None
    model_name: str | None = None
    batch_size: int = 64
    api_key_env: str = "SQUILL_EMBED_API_KEY"
    max_retries: int = 3
    max_in_flight: int = 4

    def __post_init__(self):
        if self.kind not in ("remote", "deterministic-test"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if self.kind == "remote" and not (self.endpoint and self.model_name):
            raise ValueError("remote provider requires endpoint and model_name")


class HashingEmbedder:
    """Deterministic test embedder: hashed bag of tokens, then normalize.

    A pure function of the text. Texts sharing no tokens land in disjoint
    buckets (up to hash collisions) and so have cosine similarity 0.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim

    @property
    def fingerprint(self) -> str:
        return f"hashing-embedder:dim={self.dim}"

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dim

    def embed_texts(self, texts) -> np.ndarray:
        if not texts:
            raise ValueError("texts must be non-empty")
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            tokens = tokenize(text)
            if not tokens:
                raise DegenerateVectorError(f"text {i} has no tokens to embed")
            for token in tokens:
                out[i, self._bucket(token)] += 1.0
            out[i] /= np.linalg.norm(out[i])
        return out


class RemoteEmbeddingClient:
    """Client for an embeddings-over-HTTP endpoint with bounded retries.

    Safe for concurrent ``embed_texts`` calls; in-flight requests are capped
    by ``max_in_flight``. The API key is read from the configured environment
    variable and sent as a bearer token when present.
    """

    def __init__(self, cfg: EmbeddingProviderConfig, session=None):
        if cfg.kind != "remote":
            raise ValueError("RemoteEmbeddingClient requires a remote config")
        self.cfg = cfg
        self._session = session or requests.Session()
        self._gate = threading.Semaphore(cfg.max_in_flight)

    @property
    def dim(self) -> int:
        return self.cfg.dim

    @property
    def fingerprint(self) -> str:
        return f"{self.cfg.model_name}:dim={self.cfg.dim}"

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.cfg.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post_batch(self, batch: list[str]) -> list[list[float]]:
        payload = {"model": self.cfg.model_name, "input": batch}
        last_error = None
        for attempt in range(self.cfg.max_retries):
            try:
                with self._gate:
                    resp = self._session.post(
                        self.cfg.endpoint, json=payload,
                        headers=self._headers(), timeout=60,
                    )
                resp.raise_for_status()
                data = resp.json()["data"]
                rows = sorted(data, key=lambda item: item.get("index", 0))
                return [row["embedding"] for row in rows]
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
                if attempt + 1 < self.cfg.max_retries:
                    time.sleep(0.5 * 2 ** attempt)
        raise TransportError(
            f"embedding request failed after {self.cfg.max_retries} attempts: {last_error}",
            attempts=self.cfg.max_retries,
        )

    def embed_texts(self, texts) -> np.ndarray:
        if not texts:
            raise ValueError("texts must be non-empty")
        vectors: list[list[float]] = []
        for start in range(0, len(texts), self.cfg.batch_size):
            batch = list(texts[start:start + self.cfg.batch_size])
            rows = self._post_batch(batch)
            if len(rows) != len(batch):
                raise ContractError(
                    f"endpoint returned {len(rows)} embeddings for {len(batch)} inputs"
                )
            vectors.extend(rows)
        out = np.zeros((len(vectors), self.cfg.dim), dtype=np.float64)
        for i, row in enumerate(vectors):
            if len(row) != self.cfg.dim:
                raise ContractError(
                    f"endpoint returned dim {len(row)}, configured dim is {self.cfg.dim}"
                )
            out[i] = normalize(row)
        return out


def provider_from_config(cfg: EmbeddingProviderConfig):
    if cfg.kind == "remote":
        return RemoteEmbeddingClient(cfg)
    return HashingEmbedder(dim=cfg.dim)


def embed_texts(texts, cfg: EmbeddingProviderConfig) -> np.ndarray:
    """One-shot convenience wrapper over ``provider_from_config``."""
    return provider_from_config(cfg).embed_texts(texts)
