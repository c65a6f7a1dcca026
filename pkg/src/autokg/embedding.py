"""Embedding providers: a deterministic offline hash embedder, an
OpenAI-compatible remote client, and a persistent on-disk cache."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ParameterError, ProtocolError, ProviderError

logger = logging.getLogger(__name__)

API_KEY_ENV_VAR = "AUTOKG_API_KEY"

# Boundary markers wrapped around every text before 3-gram extraction; they
# also guarantee texts shorter than 3 characters still produce grams.
_BOUNDARY_START = "\x02"
_BOUNDARY_END = "\x03"


@dataclass
class EmbeddingProviderConfig:
    provider_kind: str = "offline-hash"  # or "remote"
    endpoint_url: str = ""
    model_name: str = "offline-hash-3gram"
    dimension: int = 1536
    batch_size: int = 64
    max_retries: int = 3
    in_flight_limit: int = 4
    retry_backoff_s: float = 0.1
    cache_path: str | None = None

    def validate(self) -> None:
        if self.dimension < 2:
            raise ConfigurationError(f"embedding dimension must be >= 2, got {self.dimension}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.provider_kind not in ("offline-hash", "remote"):
            raise ConfigurationError(f"unknown provider_kind: {self.provider_kind!r}")
        if self.provider_kind == "remote" and not self.endpoint_url:
            raise ConfigurationError("remote embedding provider requires endpoint_url")


def _gram_hash(gram: str) -> int:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def offline_hash_embed(text: str, d: int) -> np.ndarray:
    """Deterministic unit vector from character 3-grams of `text`.

    Each gram hashes to a signed bucket in d dimensions; the accumulated
    vector is L2-normalized. If hashing collapses to the zero vector the
    unit basis vector indexed by a hash of the whole text is substituted,
    so the result always has norm 1.
    """
    if d < 2:
        raise ParameterError(f"embedding dimension must be >= 2, got {d}")
    padded = _BOUNDARY_START + text + _BOUNDARY_END
    vec = np.zeros(d, dtype=np.float64)
    for i in range(len(padded) - 2):
        h = _gram_hash(padded[i:i + 3])
        bucket = (h >> 1) % d
        sign = 1.0 if h & 1 else -1.0
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        vec[_gram_hash(padded) % d] = 1.0
        return vec
    return vec / norm


class OfflineHashEmbedder:
    """Callable test-double provider: text -> unit vector, fully deterministic."""

    provider_kind = "offline-hash"

    def __init__(self, dimension: int = 64, model_name: str = "offline-hash-3gram"):
        if dimension < 2:
            raise ParameterError(f"embedding dimension must be >= 2, got {dimension}")
        self.dimension = dimension
        self.model_name = model_name

    def __call__(self, text: str) -> np.ndarray:
        return offline_hash_embed(text, self.dimension)

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        return [offline_hash_embed(t, self.dimension) for t in texts]


class EmbeddingCache:
    """Append-only JSONL cache of {content_hash, model_name, vector} records.

    Safe for concurrent reads; writes are serialized by a lock.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._store: dict[tuple[str, str, str], np.ndarray] = {}
        if self.path is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                key = (rec.get("provider_kind", ""), rec["model_name"], rec["content_hash"])
                self._store[key] = np.asarray(rec["vector"], dtype=np.float64)

    @staticmethod
    def content_hash(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def get(self, provider_kind: str, model_name: str, text: str) -> np.ndarray | None:
        return self._store.get((provider_kind, model_name, self.content_hash(text)))

    def put(self, provider_kind: str, model_name: str, text: str, vector: np.ndarray) -> None:
        key = (provider_kind, model_name, self.content_hash(text))
        with self._lock:
            if key in self._store:
                return
            self._store[key] = np.asarray(vector, dtype=np.float64)
            if self.path is not None:
                record = {
                    "content_hash": key[2],
                    "model_name": model_name,
                    "vector": [float(x) for x in vector],
                    "provider_kind": provider_kind,
                }
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record) + "\n")

    def __len__(self) -> int:
        return len(self._store)


class RemoteEmbeddingProvider:
    """HTTP client for the OpenAI-embeddings wire shape.

    POSTs {"model": str, "input": [str]} and expects
    {"data": [{"index": int, "embedding": [float]}]}. The API key is read
    from the AUTOKG_API_KEY environment variable. A `session` object with a
    requests-compatible `.post` can be injected for testing.
    """

    provider_kind = "remote"

    def __init__(self, config: EmbeddingProviderConfig, session=None):
        config.validate()
        if session is None:
            import requests

            session = requests.Session()
        self.config = config
        self.session = session
        self.dimension = config.dimension
        self.model_name = config.model_name

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV_VAR)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def _post_once(self, texts: list[str]) -> list[np.ndarray]:
        response = self.session.post(
            self.config.endpoint_url,
            json={"model": self.config.model_name, "input": list(texts)},
            headers=self._headers(),
            timeout=60,
        )
        if getattr(response, "status_code", 200) >= 400:
            raise ConnectionError(f"HTTP {response.status_code}")
        payload = response.json()
        try:
            data = payload["data"]
            by_index = {int(item["index"]): item["embedding"] for item in data}
        except (KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed embedding response: {exc}") from exc
        vectors = []
        for i in range(len(texts)):
            if i not in by_index:
                raise ProtocolError(f"embedding response missing index {i}")
            vec = np.asarray(by_index[i], dtype=np.float64)
            if vec.shape != (self.dimension,):
                raise ProtocolError(
                    f"embedding dimension mismatch: expected {self.dimension}, got {vec.shape[0]}"
                )
            vectors.append(vec)
        return vectors

    def _embed_with_retry(self, texts: list[str], base_index: int) -> list[np.ndarray]:
        last_exc: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                return self._post_once(texts)
            except ProtocolError:
                raise
            except Exception as exc:  # transport failures are retried
                last_exc = exc
                if attempt < self.config.max_retries:
                    time.sleep(self.config.retry_backoff_s * (2 ** attempt))
        raise ProviderError(
            f"embedding request failed after {self.config.max_retries} retries: {last_exc}",
            failed_indices=range(base_index, base_index + len(texts)),
        )

    def __call__(self, text: str) -> np.ndarray:
        return self._embed_with_retry([text], 0)[0]

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        batches = []
        for start in range(0, len(texts), self.config.batch_size):
            batches.append((start, texts[start:start + self.config.batch_size]))
        results: list[list[np.ndarray]] = [None] * len(batches)  # type: ignore[list-item]
        workers = max(1, min(self.config.in_flight_limit, len(batches)))
        if workers == 1:
            for slot, (start, batch) in enumerate(batches):
                results[slot] = self._embed_with_retry(batch, start)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = {
                    pool.submit(self._embed_with_retry, batch, start): slot
                    for slot, (start, batch) in enumerate(batches)
                }
                for future, slot in futures.items():
                    results[slot] = future.result()
        return [vec for chunk in results for vec in chunk]


def provider_from_config(config: EmbeddingProviderConfig, session=None):
    config.validate()
    if config.provider_kind == "offline-hash":
        return OfflineHashEmbedder(dimension=config.dimension, model_name=config.model_name)
    return RemoteEmbeddingProvider(config, session=session)


class CachingEmbedder:
    """Wraps a provider with an EmbeddingCache; callable like the provider."""

    def __init__(self, provider, cache: EmbeddingCache | None = None):
        self.provider = provider
        self.cache = cache if cache is not None else EmbeddingCache()
        self.dimension = provider.dimension
        self.model_name = provider.model_name
        self.provider_kind = provider.provider_kind

    def __call__(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        out: list[np.ndarray | None] = [None] * len(texts)
        missing: list[int] = []
        for i, text in enumerate(texts):
            hit = self.cache.get(self.provider_kind, self.model_name, text)
            if hit is not None:
                out[i] = hit
            else:
                missing.append(i)
        if missing:
            fresh = self.provider.embed_batch([texts[i] for i in missing])
            for i, vec in zip(missing, fresh):
                self.cache.put(self.provider_kind, self.model_name, texts[i], vec)
                out[i] = vec
        return [np.asarray(v, dtype=np.float64) for v in out]


def embed_batch(
    texts: list[str],
    config: EmbeddingProviderConfig,
    cache: EmbeddingCache | None = None,
    session=None,
) -> list[np.ndarray]:
    """Embed `texts` in order; results are cached by (provider, model, content hash)."""
    for text in texts:
        if not text:
            raise ParameterError("cannot embed an empty string")
    embedder = CachingEmbedder(provider_from_config(config, session=session), cache)
    return embedder.embed_batch(texts)


def embed_texts_matrix(texts: list[str], embedder) -> np.ndarray:
    """Stack embeddings for `texts` into an (N, d) float64 matrix."""
    if hasattr(embedder, "embed_batch"):
        vectors = embedder.embed_batch(list(texts))
    else:
        vectors = [embedder(t) for t in texts]
    return np.vstack([np.asarray(v, dtype=np.float64) for v in vectors])
