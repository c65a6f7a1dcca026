"""Chat-completion providers with full transcript recording.

Two providers: a scripted mock that replays fixture responses for
deterministic tests, and an HTTP client speaking the OpenAI
chat-completions wire shape. Every call made through `complete` appends
one TranscriptRecord, which is what the token-budget audits sum over.
"""

from __future__ import annotations

import difflib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import count_tokens
from .errors import FixtureError, FixtureMissError, ParameterError, ProviderError, ProtocolError

API_KEY_ENV_VAR = "AUTOKG_API_KEY"
DEFAULT_TRANSCRIPT_FILENAME = "autokg_transcript.jsonl"


@dataclass
class ChatRequest:
    prompt: str
    max_output_tokens: int = 1024
    model_name: str = "mock"

    def __post_init__(self):
        if not self.prompt:
            raise ParameterError("prompt must be non-empty")
        if self.max_output_tokens < 1:
            raise ParameterError("max_output_tokens must be >= 1")


@dataclass
class TranscriptRecord:
    task_id: int
    prompt: str
    response: str
    prompt_tokens: int
    response_tokens: int
    timestamp: float


class TranscriptLog:
    """In-memory transcript with optional JSONL persistence; appends are serialized."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.records: list[TranscriptRecord] = []
        self._lock = threading.Lock()

    def append(self, record: TranscriptRecord) -> None:
        with self._lock:
            self.records.append(record)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps({
                        "task_id": record.task_id,
                        "prompt": record.prompt,
                        "response": record.response,
                        "prompt_tokens": record.prompt_tokens,
                        "response_tokens": record.response_tokens,
                        "timestamp": record.timestamp,
                    }, ensure_ascii=False) + "\n")

    def total_tokens(self, task_ids: tuple[int, ...] = (1, 2, 3)) -> int:
        return sum(
            r.prompt_tokens + r.response_tokens
            for r in self.records if r.task_id in task_ids
        )


@dataclass
class Fixture:
    """One scripted response: `pattern` matches prompts, `responses` replay in order.

    An empty pattern matches every prompt. Once the response sequence is
    exhausted the last response repeats.
    """

    pattern: str
    responses: list[str]
    regex: bool = False
    consumed: int = field(default=0, compare=False)

    def matches(self, prompt: str) -> bool:
        if self.pattern == "":
            return True
        if self.regex:
            return re.search(self.pattern, prompt) is not None
        return self.pattern in prompt

    def next_response(self) -> str:
        idx = min(self.consumed, len(self.responses) - 1)
        self.consumed += 1
        return self.responses[idx]


class ScriptedMockProvider:
    """Deterministic provider replaying the first matching fixture."""

    def __init__(self, fixtures: list[Fixture], tokenizer_id: str = "whitespace",
                 transcript_path: str | Path | None = None):
        self.fixtures = fixtures
        self.tokenizer_id = tokenizer_id
        self.transcript = TranscriptLog(transcript_path)
        self.model_name = "scripted-mock"

    def generate(self, request: ChatRequest) -> str:
        for fixture in self.fixtures:
            if fixture.matches(request.prompt):
                response = fixture.next_response()
                if count_tokens(response, self.tokenizer_id) > request.max_output_tokens:
                    raise FixtureError(
                        f"fixture response exceeds max_output_tokens={request.max_output_tokens}"
                    )
                return response
        closest = None
        best = -1.0
        for fixture in self.fixtures:
            score = difflib.SequenceMatcher(None, fixture.pattern, request.prompt).ratio()
            if score > best:
                best = score
                closest = fixture.pattern
        raise FixtureMissError(
            f"no fixture matched the prompt; closest pattern: {closest!r}",
            closest_pattern=closest,
        )


def scripted_mock(fixtures: list[tuple[str, str | list[str]]],
                  tokenizer_id: str = "whitespace",
                  transcript_path: str | Path | None = None) -> ScriptedMockProvider:
    """Build a mock provider from (pattern, response-or-response-list) pairs."""
    built = []
    for pattern, responses in fixtures:
        if isinstance(responses, str):
            responses = [responses]
        built.append(Fixture(pattern=pattern, responses=list(responses)))
    return ScriptedMockProvider(built, tokenizer_id=tokenizer_id, transcript_path=transcript_path)


def load_fixtures(path: str | Path) -> list[Fixture]:
    """Read fixtures from JSON: a list of {pattern, response | responses, regex?}."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    fixtures = []
    for item in payload:
        responses = item.get("responses")
        if responses is None:
            responses = [item["response"]]
        fixtures.append(Fixture(
            pattern=item.get("pattern", ""),
            responses=list(responses),
            regex=bool(item.get("regex", False)),
        ))
    return fixtures


@dataclass
class ChatProviderConfig:
    kind: str = "mock"  # or "remote"
    model_name: str = "gpt-3.5-turbo-16k"
    endpoint_url: str = ""
    temperature: float = 0.0
    max_retries: int = 3
    retry_backoff_s: float = 0.1
    fixtures_path: str | None = None
    tokenizer_id: str = "whitespace"


class RemoteChatProvider:
    """HTTP client for the OpenAI chat-completions wire shape.

    Sends the whole prompt as a single user message with temperature 0 by
    default; the API key comes from AUTOKG_API_KEY.
    """

    def __init__(self, config: ChatProviderConfig, session=None,
                 transcript_path: str | Path | None = None):
        if not config.endpoint_url:
            raise ParameterError("remote chat provider requires endpoint_url")
        if session is None:
            import requests

            session = requests.Session()
        self.config = config
        self.session = session
        self.tokenizer_id = config.tokenizer_id
        self.transcript = TranscriptLog(transcript_path)
        self.model_name = config.model_name

    def _post_once(self, request: ChatRequest) -> str:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV_VAR)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        response = self.session.post(
            self.config.endpoint_url,
            json={
                "model": self.config.model_name,
                "messages": [{"role": "user", "content": request.prompt}],
                "max_tokens": request.max_output_tokens,
                "temperature": self.config.temperature,
            },
            headers=headers,
            timeout=120,
        )
        if getattr(response, "status_code", 200) >= 400:
            raise ConnectionError(f"HTTP {response.status_code}")
        payload = response.json()
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed chat response: {exc}") from exc

    def generate(self, request: ChatRequest) -> str:
        last_exc: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                return self._post_once(request)
            except ProtocolError:
                raise
            except Exception as exc:
                last_exc = exc
                if attempt < self.config.max_retries:
                    time.sleep(self.config.retry_backoff_s * (2 ** attempt))
        raise ProviderError(f"chat request failed after {self.config.max_retries} retries: {last_exc}")


def complete(request: ChatRequest, provider, task_id: int = 3) -> str:
    """Run one chat completion and append a TranscriptRecord to the provider's log."""
    response = provider.generate(request)
    tokenizer_id = getattr(provider, "tokenizer_id", "whitespace")
    provider.transcript.append(TranscriptRecord(
        task_id=task_id,
        prompt=request.prompt,
        response=response,
        prompt_tokens=count_tokens(request.prompt, tokenizer_id),
        response_tokens=count_tokens(response, tokenizer_id),
        timestamp=time.time(),
    ))
    return response


def provider_from_config(config: ChatProviderConfig, session=None,
                         transcript_path: str | Path | None = None):
    if config.kind == "mock":
        fixtures = load_fixtures(config.fixtures_path) if config.fixtures_path else []
        return ScriptedMockProvider(fixtures, tokenizer_id=config.tokenizer_id,
                                    transcript_path=transcript_path)
    if config.kind == "remote":
        return RemoteChatProvider(config, session=session, transcript_path=transcript_path)
    raise ParameterError(f"unknown chat provider kind: {config.kind!r}")
