"""Corpus ingestion: tokenize documents and pack them into bounded text blocks."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .errors import ConfigurationError, ParameterError

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_TOKEN_LIMIT = 200
DEFAULT_TOKENIZER = "whitespace"

_TOKENIZERS: dict[str, Callable[[str], list[str]]] = {
    "whitespace": lambda text: text.split(),
}

_PARAGRAPH_SPLIT = re.compile(r"\n\s*\n")
# Sentence boundary: terminal punctuation followed by whitespace.
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


def register_tokenizer(tokenizer_id: str, fn: Callable[[str], list[str]]) -> None:
    """Register a tokenizer under `tokenizer_id`; `fn` maps text to a token list."""
    _TOKENIZERS[tokenizer_id] = fn


def tokenize(text: str, tokenizer_id: str = DEFAULT_TOKENIZER) -> list[str]:
    try:
        fn = _TOKENIZERS[tokenizer_id]
    except KeyError:
        raise ConfigurationError(f"unknown tokenizer_id: {tokenizer_id!r}") from None
    return fn(text)


def count_tokens(text: str, tokenizer_id: str = DEFAULT_TOKENIZER) -> int:
    """Deterministic token count of `text` under the named tokenizer."""
    return len(tokenize(text, tokenizer_id))


@dataclass(frozen=True)
class TextBlock:
    """One retrievable chunk of the knowledge base, at most T tokens long."""

    id: int
    text: str
    token_count: int
    source: str


@dataclass(frozen=True)
class Corpus:
    blocks: tuple[TextBlock, ...]
    tokenizer_id: str = DEFAULT_TOKENIZER

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self) -> Iterator[TextBlock]:
        return iter(self.blocks)

    def texts(self) -> list[str]:
        return [b.text for b in self.blocks]

    def to_jsonl(self) -> str:
        lines = []
        for b in self.blocks:
            lines.append(json.dumps(
                {"id": b.id, "source": b.source, "token_count": b.token_count, "text": b.text},
                ensure_ascii=False,
            ))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_jsonl(cls, payload: str, tokenizer_id: str = DEFAULT_TOKENIZER) -> "Corpus":
        blocks = []
        for line in payload.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            blocks.append(TextBlock(
                id=rec["id"], text=rec["text"],
                token_count=rec["token_count"], source=rec["source"],
            ))
        corpus = cls(blocks=tuple(blocks), tokenizer_id=tokenizer_id)
        corpus.validate()
        return corpus

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, tokenizer_id: str = DEFAULT_TOKENIZER) -> "Corpus":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"), tokenizer_id)

    def content_hash(self) -> str:
        """Stable sha256 over the canonical JSONL serialization."""
        memo = self.__dict__.get("_content_hash")
        if memo is None:
            memo = hashlib.sha256(self.to_jsonl().encode("utf-8")).hexdigest()
            self.__dict__["_content_hash"] = memo
        return memo

    def validate(self) -> None:
        for i, b in enumerate(self.blocks):
            if b.id != i:
                raise ParameterError(f"block ids must be dense 0..N-1, got {b.id} at position {i}")
            if not b.text.strip():
                raise ParameterError(f"block {i} is empty after trimming")
            if count_tokens(b.text, self.tokenizer_id) != b.token_count:
                raise ParameterError(f"block {i} token_count does not match its text")


def _pack_units(units: list[list[str]], limit: int) -> list[list[str]]:
    """Greedily pack token-lists into groups of at most `limit` tokens.

    A unit longer than `limit` is hard-cut into full-size pieces.
    """
    groups: list[list[str]] = []
    current: list[str] = []
    for unit in units:
        if len(unit) > limit:
            if current:
                groups.append(current)
                current = []
            for start in range(0, len(unit), limit):
                piece = unit[start:start + limit]
                if len(piece) == limit:
                    groups.append(piece)
                else:
                    current = piece
            continue
        if len(current) + len(unit) <= limit:
            current.extend(unit)
        else:
            groups.append(current)
            current = list(unit)
    if current:
        groups.append(current)
    return groups


def _split_document(text: str, limit: int, tokenizer_id: str) -> list[str]:
    """Boundary-first packing: paragraphs, then sentences, then hard token cuts."""
    paragraphs = [p for p in _PARAGRAPH_SPLIT.split(text) if p.strip()]

    pieces: list[str] = []
    pending: list[str] = []  # paragraphs accumulated for the current block
    pending_tokens = 0

    def flush() -> None:
        nonlocal pending, pending_tokens
        if pending:
            pieces.append("\n\n".join(pending))
            pending = []
            pending_tokens = 0

    for para in paragraphs:
        n = count_tokens(para, tokenizer_id)
        if n > limit:
            flush()
            # Paragraph too large: pack its sentences, hard-cutting oversized ones.
            sentences = [s for s in _SENTENCE_SPLIT.split(para) if s.strip()]
            unit_tokens = [tokenize(s, tokenizer_id) for s in sentences]
            for group in _pack_units(unit_tokens, limit):
                pieces.append(" ".join(group))
            continue
        if pending_tokens + n <= limit:
            pending.append(para)
            pending_tokens += n
        else:
            flush()
            pending = [para]
            pending_tokens = n
    flush()
    return pieces


def chunk(
    documents: Iterable[tuple[str, str]],
    T: int = DEFAULT_BLOCK_TOKEN_LIMIT,
    tokenizer_id: str = DEFAULT_TOKENIZER,
) -> Corpus:
    """Split (source, text) documents into a Corpus of blocks of at most T tokens.

    Split points prefer paragraph boundaries, then sentence boundaries, then
    hard token cuts; per source, the token sequence is preserved across blocks.
    Documents with zero tokens are skipped with a warning.
    """
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    blocks: list[TextBlock] = []
    for source, text in documents:
        if count_tokens(text, tokenizer_id) == 0:
            logger.warning("document %r has zero tokens, skipped", source)
            continue
        for piece in _split_document(text, T, tokenizer_id):
            blocks.append(TextBlock(
                id=len(blocks),
                text=piece,
                token_count=count_tokens(piece, tokenizer_id),
                source=source,
            ))
    return Corpus(blocks=tuple(blocks), tokenizer_id=tokenizer_id)


def load_documents(paths: Iterable[str | Path]) -> list[tuple[str, str]]:
    """Read input documents: plain-text files, or JSON-lines of {"source","text"}."""
    documents: list[tuple[str, str]] = []
    for path in paths:
        path = Path(path)
        if path.suffix == ".jsonl":
            for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
                if not line.strip():
                    continue
                rec = json.loads(line)
                try:
                    documents.append((str(rec["source"]), str(rec["text"])))
                except KeyError as exc:
                    raise ConfigurationError(
                        f"{path}:{line_no + 1}: JSONL document record needs 'source' and 'text'"
                    ) from exc
        else:
            documents.append((str(path), path.read_text(encoding="utf-8")))
    return documents
