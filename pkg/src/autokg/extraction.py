"""Keyword extraction over clustered text blocks.

Both clustering algorithms partition the corpus; for each cluster a
prompt carries 2c sampled blocks plus a sampled avoid-list of previously
collected keywords, and the LLM returns up to l1 keywords of at most l2
tokens. A single refinement call then concentrates, deduplicates, splits,
and deletes. Token usage is audited against the closed-form budget
2n(2cT + (m + 2*l1)(l2 + 1)) + L_F.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusterResult, kmeans, sample_cluster, spectral
from .corpus import Corpus, count_tokens
from .errors import ParameterError
from .llm import ChatRequest, TranscriptLog, complete
from .prompts import fixed_template_tokens, render_task1, render_task2
from .simgraph import SimilarityGraph

logger = logging.getLogger(__name__)

_STRAY_PUNCT = " \t\r\n.;:!?*\"'`“”‘’·-–—"


@dataclass
class ExtractionParams:
    n: int = 15       # clusters per algorithm
    c: int = 15       # blocks per sampling half (2c per cluster)
    l1: int = 10      # max keywords per call
    l2: int = 3       # max tokens per keyword
    m: int = 300      # sampled previous-keyword count
    main_topic: str = ""
    language: str = "English"
    seed: int = 0

    def validate(self) -> None:
        for name in ("n", "c", "l1", "l2", "m"):
            if getattr(self, name) < 1 and name != "m":
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.m < 0:
            raise ParameterError(f"m must be >= 0, got {self.m}")


@dataclass
class KeywordSet:
    """Ordered keywords with (algorithm, cluster) provenance per keyword."""

    keywords: list[str] = field(default_factory=list)
    provenance: dict[str, list[tuple[str, int]]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.keywords)

    def add(self, keyword: str, source: tuple[str, int]) -> None:
        key = keyword.lower()
        for existing in self.keywords:
            if existing.lower() == key:
                self.provenance.setdefault(existing, []).append(source)
                return
        self.keywords.append(keyword)
        self.provenance[keyword] = [source]

    def to_dict(self) -> dict:
        return {
            "keywords": list(self.keywords),
            "provenance": {k: [list(s) for s in v] for k, v in self.provenance.items()},
        }


@dataclass
class TokenBudget:
    n: int
    c: int
    T: int
    m: int
    l1: int
    l2: int
    L_F: int
    computed_max: int
    actual_used: int = 0


def kg_token_budget(n: int, c: int, T: int, m: int, l1: int, l2: int, L_F: int = 0) -> int:
    """Worst-case token usage of the whole extraction stage (fixed text = L_F)."""
    for name, value in (("n", n), ("c", c), ("T", T), ("m", m), ("l1", l1), ("l2", l2), ("L_F", L_F)):
        if value < 0:
            raise ParameterError(f"{name} must be nonnegative, got {value}")
    return 2 * n * (2 * c * T + (m + 2 * l1) * (l2 + 1)) + L_F


def build_task1_prompt(blocks, previous: list[str], params: ExtractionParams) -> str:
    """Fill the extraction template with sampled blocks and the avoid-list."""
    if not blocks:
        raise ParameterError("task-1 prompt needs at least one block")
    return render_task1(
        main_topic=params.main_topic,
        l1=params.l1,
        l2=params.l2,
        language=params.language,
        block_texts=[b.text for b in blocks],
        previous_keywords=previous,
    )


def parse_keywords(llm_response: str, l2: int, tokenizer_id: str = "whitespace") -> list[str]:
    """Split a comma-separated response into clean keywords.

    Trims whitespace and stray punctuation, drops empties, drops
    keywords longer than l2 tokens (with a warning), preserves order,
    and deduplicates case-insensitively.
    """
    seen: set[str] = set()
    out: list[str] = []
    for piece in llm_response.split(","):
        kw = piece.strip(_STRAY_PUNCT)
        kw = re.sub(r"\s+", " ", kw)
        if not kw:
            continue
        if count_tokens(kw, tokenizer_id) > l2:
            logger.warning("dropping keyword longer than %d tokens: %r", l2, kw)
            continue
        if kw.lower() in seen:
            continue
        seen.add(kw.lower())
        out.append(kw)
    return out


def _call_rng(seed: int, algo_index: int, cluster_id: int, salt: int) -> np.random.Generator:
    return np.random.default_rng([seed, algo_index, cluster_id, salt])


def _sample_avoid_list(snapshot: list[str], m: int, rng: np.random.Generator) -> list[str]:
    if len(snapshot) > m:
        picked = rng.choice(len(snapshot), size=m, replace=False)
        return [snapshot[i] for i in picked]
    return list(snapshot)


def _task1_call(corpus: Corpus, vectors: np.ndarray, result: ClusterResult,
                cluster_id: int, avoid: list[str], params: ExtractionParams,
                algo_index: int, provider) -> list[str]:
    members = result.members(cluster_id)
    space = result.space_vectors if result.space_vectors is not None else vectors
    sample = sample_cluster(
        members, space[members], result.centers[cluster_id], params.c,
        seed=int(_call_rng(params.seed, algo_index, cluster_id, 0).integers(2 ** 31)),
        cluster_id=cluster_id,
    )
    blocks = [corpus.blocks[i] for i in sample.all_blocks()]
    prompt = build_task1_prompt(blocks, avoid, params)
    request = ChatRequest(
        prompt=prompt,
        max_output_tokens=max(1, params.l1 * (params.l2 + 1)),
        model_name=getattr(provider, "model_name", "mock"),
    )
    response = complete(request, provider, task_id=1)
    # Per-call cap: at most l1 keywords survive from one response.
    return parse_keywords(response, params.l2)[:params.l1]


def extract_keywords(
    corpus: Corpus,
    vectors: np.ndarray,
    graph: SimilarityGraph,
    params: ExtractionParams,
    provider,
    sequential: bool = False,
    max_workers: int = 4,
) -> KeywordSet:
    """Run the full two-clustering extraction loop and collect keywords.

    Cluster processing order is fixed: all k-means clusters 0..n-1, then
    all spectral clusters 0..n-1. In the default mode each clustering
    pass dispatches its n calls concurrently against an avoid-list
    snapshot taken at the start of the pass; `sequential=True` instead
    updates the avoid-list after every single call.
    """
    params.validate()
    if params.n > len(corpus):
        raise ParameterError(f"n={params.n} exceeds corpus size {len(corpus)}")

    vectors = np.asarray(vectors, dtype=np.float64)
    clusterings = [
        ("kmeans", kmeans(vectors, params.n, seed=params.seed)),
        ("spectral", spectral(graph, params.n, seed=params.seed)),
    ]

    collected = KeywordSet()
    for algo_index, (algo, result) in enumerate(clusterings):
        if sequential:
            for cid in range(params.n):
                rng = _call_rng(params.seed, algo_index, cid, 1)
                avoid = _sample_avoid_list(collected.keywords, params.m, rng)
                for kw in _task1_call(corpus, vectors, result, cid, avoid, params, algo_index, provider):
                    collected.add(kw, (algo, cid))
        else:
            snapshot = list(collected.keywords)
            avoid_lists = [
                _sample_avoid_list(snapshot, params.m, _call_rng(params.seed, algo_index, cid, 1))
                for cid in range(params.n)
            ]
            with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
                futures = [
                    pool.submit(_task1_call, corpus, vectors, result, cid,
                                avoid_lists[cid], params, algo_index, provider)
                    for cid in range(params.n)
                ]
                for cid, future in enumerate(futures):
                    for kw in future.result():
                        collected.add(kw, (algo, cid))

    assert len(collected) <= 2 * params.n * params.l1
    return collected


def _batch_keywords(keywords: list[str], token_budget: int, tokenizer_id: str) -> list[list[str]]:
    batches: list[list[str]] = []
    current: list[str] = []
    used = 0
    for kw in keywords:
        cost = count_tokens(kw, tokenizer_id) + 1
        if current and used + cost > token_budget:
            batches.append(current)
            current = []
            used = 0
        current.append(kw)
        used += cost
    if current:
        batches.append(current)
    return batches


def refine_keywords(raw: KeywordSet, params: ExtractionParams, provider) -> KeywordSet:
    """Single refinement pass over the raw keyword list.

    Oversized inputs are split into batches of at most n*l1*(l2+1) tokens
    and refined per batch. An empty refined set falls back to the raw set
    with a warning.
    """
    if not raw.keywords:
        raise ParameterError("refinement needs a non-empty raw keyword set")

    batch_budget = max(params.l2 + 1, params.n * params.l1 * (params.l2 + 1))
    refined = KeywordSet()
    for batch_index, batch in enumerate(_batch_keywords(raw.keywords, batch_budget, "whitespace")):
        prompt = render_task2(params.main_topic, params.l2, params.language, batch)
        request = ChatRequest(
            prompt=prompt,
            max_output_tokens=max(1, 2 * params.n * params.l1 * (params.l2 + 1)),
            model_name=getattr(provider, "model_name", "mock"),
        )
        response = complete(request, provider, task_id=2)
        for kw in parse_keywords(response, params.l2):
            sources = raw.provenance.get(kw)
            if sources is None:
                for existing, prov in raw.provenance.items():
                    if existing.lower() == kw.lower():
                        sources = prov
                        break
            for source in sources if sources else [("refine", batch_index)]:
                refined.add(kw, source)

    if not refined.keywords:
        logger.warning("refinement returned no keywords; keeping the raw set")
        return raw
    return refined


def audit_token_usage(log: TranscriptLog, params: ExtractionParams, T: int,
                      tokenizer_id: str = "whitespace") -> TokenBudget:
    """Compare transcript usage for tasks 1-2 against the closed-form budget.

    Fixed template text is subtracted from each prompt so the comparison
    matches the budget formula evaluated with L_F = 0.
    """
    fixed = {
        1: fixed_template_tokens(1, params.main_topic, params.l1, params.l2,
                                 params.language, tokenizer_id),
        2: fixed_template_tokens(2, params.main_topic, params.l1, params.l2,
                                 params.language, tokenizer_id),
    }
    actual = 0
    for record in log.records:
        if record.task_id in (1, 2):
            actual += max(0, record.prompt_tokens - fixed[record.task_id])
            actual += record.response_tokens
    return TokenBudget(
        n=params.n, c=params.c, T=T, m=params.m, l1=params.l1, l2=params.l2, L_F=0,
        computed_max=kg_token_budget(params.n, params.c, T, params.m, params.l1, params.l2, 0),
        actual_used=actual,
    )
