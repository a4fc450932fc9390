"""Language-model service abstraction.

Two interchangeable implementations: an HTTP client speaking a
completion-service JSON protocol, and a fully deterministic scripted
backend for tests and synthetic worlds. Both expose sampled generation,
optional token log-probs and representation vectors, and both are safe to
share across concurrent rollouts.

Also home of the masked generation loss: the negative sum of token
log-probs after the in-context prefix, which measures how well a backend
predicts the target continuation without charging it for the context.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass

import numpy as np
import requests

from .errors import (
    BackendUnavailable,
    ContextLongerThanSequence,
    DimensionUnknown,
    MalformedResponse,
    Timeout,
)

log = logging.getLogger(__name__)

#: embedding dimension of the scripted backend
SCRIPTED_DIM = 64

#: sleep schedule between HTTP attempts
RETRY_BACKOFF = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    n: int = 1
    max_tokens: int = 128
    temperature: float = 0.7
    stop: tuple[str, ...] = ()
    seed: int | None = None
    want_logprobs: bool = False

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if not isinstance(self.stop, tuple):
            object.__setattr__(self, "stop", tuple(self.stop))


@dataclass
class GenerationResult:
    texts: list[str]
    token_logprobs: list[list[tuple[str, float]]] | None = None


def _truncate_at_stop(text: str, stop: tuple[str, ...]) -> str:
    cut = len(text)
    for marker in stop:
        idx = text.find(marker)
        if idx != -1:
            cut = min(cut, idx)
    return text[:cut]


def sft_loss(token_logprobs, context_len: int) -> float:
    """Negative sum of log-probs for the tokens after the first
    `context_len` positions. Zero when everything is context."""
    n = len(token_logprobs)
    if context_len < 0:
        raise ValueError("context length must be non-negative")
    if context_len > n:
        raise ContextLongerThanSequence(f"context {context_len} > sequence {n}")
    return -float(sum(token_logprobs[context_len:]))


def hash_unit_vector(text: str, seed: int, dim: int = SCRIPTED_DIM) -> np.ndarray:
    """Deterministic pseudorandom unit vector derived from (seed, text).

    Stable across platforms and processes: the text is hashed with sha256
    and the digest seeds a PCG64 stream.
    """
    digest = hashlib.sha256(f"{seed}:{text}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    vec = rng.standard_normal(dim)
    return vec / np.sqrt(vec @ vec)


class ScriptedBackend:
    """Deterministic test double.

    Canned completions are keyed by exact prompt; canned embeddings by
    exact text. Anything unkeyed falls back to seeded pseudo-content, so a
    rollout that wanders off the scripted paths keeps running (and never
    emits the end marker). Identical requests always produce identical
    results. Thread-safe.
    """

    def __init__(self, fallback_seed: int = 0, dim: int = SCRIPTED_DIM):
        self.fallback_seed = fallback_seed
        self.dim = dim
        self._completions: dict[str, list[str]] = {}
        self._embeddings: dict[str, np.ndarray] = {}
        self.generate_calls = 0
        self.embed_calls = 0
        self._lock = threading.Lock()

    def add_completion(self, prompt: str, texts: list[str]) -> None:
        self._completions[prompt] = list(texts)

    def add_embedding(self, text: str, vector) -> None:
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError(f"expected dim {self.dim}, got {vec.shape}")
        self._embeddings[text] = vec

    def save_script(self, path) -> None:
        """Persist the canned completions/embeddings so a CLI run can replay
        this backend exactly (load with make_backend("script:<path>"))."""
        obj = {
            "fallback_seed": self.fallback_seed,
            "dim": self.dim,
            "completions": self._completions,
            "embeddings": {k: v.tolist() for k, v in self._embeddings.items()},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh)

    @staticmethod
    def load_script(path) -> "ScriptedBackend":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        backend = ScriptedBackend(fallback_seed=obj["fallback_seed"], dim=obj["dim"])
        for prompt, texts in obj["completions"].items():
            backend.add_completion(prompt, texts)
        for text, vec in obj["embeddings"].items():
            backend.add_embedding(text, vec)
        return backend

    def _fallback_texts(self, req: GenerationRequest) -> list[str]:
        tag = hashlib.sha256(
            f"{self.fallback_seed}:{req.seed}:{req.prompt}".encode("utf-8")
        ).hexdigest()[:8]
        return [f"unscripted step {tag} option {i}" for i in range(req.n)]

    def generate(self, req: GenerationRequest) -> GenerationResult:
        with self._lock:
            self.generate_calls += 1
        canned = self._completions.get(req.prompt)
        if canned is None:
            texts = self._fallback_texts(req)
        else:
            # cycle when the script offers fewer candidates than requested
            texts = [canned[i % len(canned)] for i in range(req.n)]
        texts = [_truncate_at_stop(t, req.stop) for t in texts]
        logprobs = None
        if req.want_logprobs:
            logprobs = []
            for text in texts:
                toks = text.split() or [text]
                rng = np.random.default_rng(
                    int.from_bytes(
                        hashlib.sha256(
                            f"{self.fallback_seed}:lp:{text}".encode("utf-8")
                        ).digest()[:8],
                        "little",
                    )
                )
                logprobs.append([(tok, float(-rng.uniform(0.05, 3.0))) for tok in toks])
        return GenerationResult(texts=texts, token_logprobs=logprobs)

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        with self._lock:
            self.embed_calls += 1
        known = self._embeddings.get(text)
        if known is not None:
            return known.copy()
        return hash_unit_vector(text, self.fallback_seed, self.dim)


class HTTPBackend:
    """Client for a completion-compatible HTTP service.

    POST <base>/completions   {prompt, n, max_tokens, temperature, stop[, logprobs]}
    POST <base>/embeddings    {input}

    Transport failures are retried 3 times with 0.5/1/2 s backoff, then
    surface as BackendUnavailable (Timeout for deadline overruns). A
    bounded semaphore caps in-flight requests.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        timeout: float = 30.0,
        max_in_flight: int = 8,
        session: requests.Session | None = None,
    ):
        self.base_url = (base_url or os.environ.get("COGTREE_BASE_URL", "")).rstrip("/")
        if not self.base_url:
            raise ValueError("HTTP backend needs a base URL (or COGTREE_BASE_URL)")
        self.api_key = api_key if api_key is not None else os.environ.get("COGTREE_API_KEY")
        self.timeout = timeout
        self._session = session or requests.Session()
        self._sem = threading.BoundedSemaphore(max_in_flight)
        self._dim: int | None = None

    @property
    def dim(self) -> int:
        if self._dim is None:
            raise DimensionUnknown("embed something first or set _dim explicitly")
        return self._dim

    def _post(self, endpoint: str, body: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = f"{self.base_url}/{endpoint}"
        last_exc: Exception | None = None
        for attempt, backoff in enumerate(RETRY_BACKOFF):
            try:
                with self._sem:
                    resp = self._session.post(
                        url, json=body, headers=headers, timeout=self.timeout
                    )
            except requests.Timeout as exc:
                last_exc = exc
            except requests.RequestException as exc:
                last_exc = exc
            else:
                if resp.status_code >= 500:
                    last_exc = BackendUnavailable(f"{url} -> {resp.status_code}")
                elif resp.status_code >= 400:
                    raise MalformedResponse(f"{url} -> {resp.status_code}: {resp.text[:200]}")
                else:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        raise MalformedResponse(f"{url}: invalid JSON body") from exc
            if attempt + 1 < len(RETRY_BACKOFF):
                log.warning("retrying %s after %s (attempt %d)", url, last_exc, attempt + 1)
                time.sleep(backoff)
        if isinstance(last_exc, requests.Timeout):
            raise Timeout(f"{url}: timed out after {len(RETRY_BACKOFF)} attempts") from last_exc
        raise BackendUnavailable(
            f"{url}: gave up after {len(RETRY_BACKOFF)} attempts ({last_exc})"
        ) from last_exc

    def generate(self, req: GenerationRequest) -> GenerationResult:
        body = {
            "prompt": req.prompt,
            "n": req.n,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
            "stop": list(req.stop),
        }
        if req.seed is not None:
            body["seed"] = req.seed
        if req.want_logprobs:
            body["logprobs"] = True
        payload = self._post("completions", body)
        try:
            choices = payload["choices"]
            texts = [_truncate_at_stop(c["text"], req.stop) for c in choices]
        except (KeyError, TypeError) as exc:
            raise MalformedResponse(f"completion payload missing choices/text: {exc}") from exc
        if len(texts) != req.n:
            raise MalformedResponse(f"asked for {req.n} candidates, got {len(texts)}")
        logprobs = None
        if req.want_logprobs:
            logprobs = []
            for c in choices:
                lp = (c.get("logprobs") or {}).get("token_logprobs")
                tokens = (c.get("logprobs") or {}).get("tokens") or []
                if lp is None:
                    raise MalformedResponse("logprobs requested but absent in response")
                toks = tokens if len(tokens) == len(lp) else [""] * len(lp)
                logprobs.append(list(zip(toks, [float(x) for x in lp])))
        return GenerationResult(texts=texts, token_logprobs=logprobs)

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        payload = self._post("embeddings", {"input": text})
        try:
            vec = np.asarray(payload["data"][0]["embedding"], dtype=np.float64)
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"embedding payload missing data[0].embedding: {exc}") from exc
        if vec.ndim != 1 or vec.size == 0:
            raise MalformedResponse(f"embedding has bad shape {vec.shape}")
        if self._dim is None:
            self._dim = int(vec.shape[0])
        return vec


def make_backend(spec: str, fallback_seed: int = 0):
    """Build a backend from a CLI-style spec: "scripted", "scripted:SEED",
    "script:<saved script file>" or a base URL."""
    if spec == "scripted":
        return ScriptedBackend(fallback_seed=fallback_seed)
    if spec.startswith("scripted:"):
        return ScriptedBackend(fallback_seed=int(spec.split(":", 1)[1]))
    if spec.startswith("script:"):
        return ScriptedBackend.load_script(spec.split(":", 1)[1])
    return HTTPBackend(base_url=spec)
