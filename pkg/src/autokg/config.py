"""Engine configuration: one JSON file drives every pipeline command.

Schema (all sections optional unless noted; defaults shown):

    {
      "corpus": {"paths": ["docs/*.txt or .jsonl", ...],   # required for build
                 "T": 200, "tokenizer_id": "whitespace"},
      "embedding": {"provider_kind": "offline-hash",       # or "remote"
                    "dimension": 1536, "model_name": "...",
                    "endpoint_url": "", "batch_size": 64, "max_retries": 3},
      "llm": {"kind": "mock",                              # or "remote"
              "fixtures_path": "fixtures.json",            # mock only
              "model_name": "gpt-3.5-turbo-16k",
              "endpoint_url": "", "temperature": 0.0, "max_retries": 3},
      "graph": {"K": 30},
      "extraction": {"n": 15, "c": 15, "l1": 10, "l2": 3, "m": 300,
                     "main_topic": "", "language": "English",
                     "sequential": false},
      "association": {"n1": 5, "n2": 35},
      "search": {"s_t0": 15, "s_k1": 5, "s_t1": 3, "s_k2": 3, "s_t2": 2},
      "query": {"token_limit": 10000, "max_response_tokens": 1024},
      "seed": 0,
      "output_dir": "autokg_out"                           # required
    }

Relative paths are resolved against the config file's directory. Secrets
never live in the file: the API key is read from AUTOKG_API_KEY.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .embedding import EmbeddingProviderConfig
from .errors import ConfigurationError
from .extraction import ExtractionParams
from .hybrid import SearchParams
from .llm import ChatProviderConfig


@dataclass
class EngineConfig:
    corpus_paths: list[str] = field(default_factory=list)
    T: int = 200
    tokenizer_id: str = "whitespace"
    embedding: EmbeddingProviderConfig = field(default_factory=EmbeddingProviderConfig)
    llm: ChatProviderConfig = field(default_factory=ChatProviderConfig)
    K: int = 30
    extraction: ExtractionParams = field(default_factory=ExtractionParams)
    sequential_extraction: bool = False
    n1: int = 5
    n2: int = 35
    search: SearchParams = field(default_factory=SearchParams)
    token_limit: int = 10_000
    max_response_tokens: int = 1024
    seed: int = 0
    output_dir: str = "autokg_out"

    def validate(self) -> None:
        if self.T < 1:
            raise ConfigurationError(f"T must be >= 1, got {self.T}")
        if self.K < 1:
            raise ConfigurationError(f"K must be >= 1, got {self.K}")
        if self.n1 < 1 or self.n2 < 1:
            raise ConfigurationError(f"n1 and n2 must be >= 1, got n1={self.n1}, n2={self.n2}")
        if self.token_limit < 1 or self.max_response_tokens < 1:
            raise ConfigurationError("token_limit and max_response_tokens must be >= 1")
        self.embedding.validate()
        try:
            self.extraction.validate()
        except Exception as exc:
            raise ConfigurationError(str(exc)) from exc
        if self.llm.kind not in ("mock", "remote"):
            raise ConfigurationError(f"unknown llm kind: {self.llm.kind!r}")
        if self.llm.kind == "remote" and not self.llm.endpoint_url:
            raise ConfigurationError("remote llm requires endpoint_url")

    def manifest_params(self) -> dict:
        """Parameter snapshot embedded into build manifests."""
        return {
            "T": self.T,
            "tokenizer_id": self.tokenizer_id,
            "K": self.K,
            "extraction": {
                "n": self.extraction.n, "c": self.extraction.c,
                "l1": self.extraction.l1, "l2": self.extraction.l2,
                "m": self.extraction.m, "main_topic": self.extraction.main_topic,
                "language": self.extraction.language, "seed": self.extraction.seed,
            },
            "association": {"n1": self.n1, "n2": self.n2},
            "embedding": {
                "provider_kind": self.embedding.provider_kind,
                "model_name": self.embedding.model_name,
                "dimension": self.embedding.dimension,
            },
            "llm": {"kind": self.llm.kind, "model_name": self.llm.model_name},
            "seed": self.seed,
        }


def _resolve(base: Path, value: str | None) -> str | None:
    if value is None or value == "":
        return value
    path = Path(value)
    return str(path if path.is_absolute() else base / path)


def load_config(path: str | Path) -> EngineConfig:
    """Parse and validate a JSON config file; relative paths follow the file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    base = path.parent

    known = {"corpus", "embedding", "llm", "graph", "extraction", "association",
             "search", "query", "seed", "output_dir"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")

    corpus_cfg = raw.get("corpus", {})
    embedding_cfg = dict(raw.get("embedding", {}))
    llm_cfg = dict(raw.get("llm", {}))
    extraction_cfg = dict(raw.get("extraction", {}))
    sequential = bool(extraction_cfg.pop("sequential", False))
    seed = int(raw.get("seed", 0))
    extraction_cfg.setdefault("seed", seed)

    if "cache_path" in embedding_cfg:
        embedding_cfg["cache_path"] = _resolve(base, embedding_cfg["cache_path"])
    if "fixtures_path" in llm_cfg:
        llm_cfg["fixtures_path"] = _resolve(base, llm_cfg["fixtures_path"])

    try:
        config = EngineConfig(
            corpus_paths=[_resolve(base, p) for p in corpus_cfg.get("paths", [])],
            T=int(corpus_cfg.get("T", 200)),
            tokenizer_id=corpus_cfg.get("tokenizer_id", "whitespace"),
            embedding=EmbeddingProviderConfig(**embedding_cfg),
            llm=ChatProviderConfig(**llm_cfg),
            K=int(raw.get("graph", {}).get("K", 30)),
            extraction=ExtractionParams(**extraction_cfg),
            sequential_extraction=sequential,
            n1=int(raw.get("association", {}).get("n1", 5)),
            n2=int(raw.get("association", {}).get("n2", 35)),
            search=SearchParams(**raw.get("search", {})),
            token_limit=int(raw.get("query", {}).get("token_limit", 10_000)),
            max_response_tokens=int(raw.get("query", {}).get("max_response_tokens", 1024)),
            seed=seed,
            output_dir=_resolve(base, raw.get("output_dir", "autokg_out")),
        )
    except TypeError as exc:
        raise ConfigurationError(f"bad config field: {exc}") from exc
    config.validate()
    return config
