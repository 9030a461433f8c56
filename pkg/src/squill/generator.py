"""SQL generation backends: a chat-completions client and scripted stubs.

The scripted backend returns a fixed response list in order and makes
every orchestration test deterministic and offline. The remote backend
speaks the de-facto chat-completions API; the prompt goes out as a single
user message under a minimal system line so extraction stays reliable.
"""

from __future__ import annotations

import logging
import os
import re
import threading
import time
from dataclasses import dataclass

import requests

from .errors import GenerationError, ScriptExhaustedError, TransportError

log = logging.getLogger(__name__)

SYSTEM_PROMPT = "Generate only the SQL query."
DEFAULT_SAMPLE_TEMPERATURE = 0.7
DEFAULT_CANDIDATES = 8

_FENCE_RE = re.compile(r"```(?:sql)?\s*\n?(.*?)```", re.DOTALL | re.IGNORECASE)


@dataclass(frozen=True)
class GeneratorConfig:
    kind: str = "scripted"  # "remote" | "scripted"
    endpoint: str | None = None
    model: str | None = None
    temperature: float = 0.0
    max_tokens: int = 512
    script: tuple[str, ...] = ()
    api_key_env: str = "SQUILL_GENERATOR_API_KEY"
    max_retries: int = 3
    max_in_flight: int = 4

    def __post_init__(self):
        if self.kind not in ("remote", "scripted"):
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.kind == "remote" and not (self.endpoint and self.model):
            raise ValueError("remote generator requires endpoint and model")
        if self.kind == "scripted" and not self.script:
            raise ValueError("scripted generator requires a non-empty script")


def extract_sql(text: str) -> str:
    """Strip a fenced code block when present; never alters the SQL itself."""
    match = _FENCE_RE.search(text)
    if match:
        return match.group(1).strip()
    return text.strip()


class ScriptedGenerator:
    """Returns scripted responses in order; exhaustion is an error, not a cycle."""

    def __init__(self, script):
        script = list(script)
        if not script:
            raise ValueError("script must be non-empty")
        self._script = script
        self._next = 0
        self._lock = threading.Lock()

    def generate(self, prompt: str, temperature: float | None = None) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        with self._lock:
            if self._next >= len(self._script):
                raise ScriptExhaustedError(
                    f"script exhausted after {len(self._script)} responses"
                )
            response = self._script[self._next]
            self._next += 1
        return extract_sql(response)

    def sample(self, prompt: str, n: int,
               temperature: float = DEFAULT_SAMPLE_TEMPERATURE) -> list[str]:
        if n < 1:
            raise ValueError("n must be >= 1")
        return [self.generate(prompt, temperature) for _ in range(n)]


class RemoteGenerator:
    """Chat-completions client with bounded retries and in-flight limit."""

    def __init__(self, cfg: GeneratorConfig, session=None):
        if cfg.kind != "remote":
            raise ValueError("RemoteGenerator requires a remote config")
        self.cfg = cfg
        self._session = session or requests.Session()
        self._gate = threading.Semaphore(cfg.max_in_flight)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.cfg.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _request(self, prompt: str, n: int, temperature: float) -> list[str]:
        payload = {
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": prompt},
            ],
            "temperature": temperature,
            "max_tokens": self.cfg.max_tokens,
        }
        if n > 1:
            payload["n"] = n
        last_error = None
        for attempt in range(self.cfg.max_retries):
            try:
                with self._gate:
                    resp = self._session.post(
                        self.cfg.endpoint, json=payload,
                        headers=self._headers(), timeout=120,
                    )
                resp.raise_for_status()
                choices = resp.json()["choices"]
                texts = [c["message"]["content"] for c in choices]
                if len(texts) < n:
                    raise GenerationError(
                        f"endpoint returned {len(texts)} choices for n={n}"
                    )
                return [extract_sql(t) for t in texts[:n]]
            except GenerationError:
                raise
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
                if attempt + 1 < self.cfg.max_retries:
                    time.sleep(0.5 * 2 ** attempt)
        raise TransportError(
            f"generation request failed after {self.cfg.max_retries} attempts: {last_error}",
            attempts=self.cfg.max_retries,
        )

    def generate(self, prompt: str, temperature: float | None = None) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        temp = self.cfg.temperature if temperature is None else temperature
        return self._request(prompt, 1, temp)[0]

    def sample(self, prompt: str, n: int,
               temperature: float = DEFAULT_SAMPLE_TEMPERATURE) -> list[str]:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        if n < 1:
            raise ValueError("n must be >= 1")
        return self._request(prompt, n, temperature)


def make_generator(cfg: GeneratorConfig):
    if cfg.kind == "remote":
        return RemoteGenerator(cfg)
    return ScriptedGenerator(cfg.script)


def generate_sql(prompt: str, generator) -> str:
    """One SQL candidate from a generator instance (or config)."""
    if isinstance(generator, GeneratorConfig):
        generator = make_generator(generator)
    return generator.generate(prompt)


def sample_candidates(prompt: str, generator, n: int = DEFAULT_CANDIDATES,
                      temperature: float = DEFAULT_SAMPLE_TEMPERATURE) -> list[str]:
    """n independent candidates; n=1 is equivalent to generate_sql."""
    if isinstance(generator, GeneratorConfig):
        generator = make_generator(generator)
    return generator.sample(prompt, n, temperature)
