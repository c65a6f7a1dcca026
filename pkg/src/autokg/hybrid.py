"""Three-stage hybrid retrieval and answer-prompt assembly.

Stage 1 takes the angle-nearest blocks to the query embedding. Stage 2
takes the angle-nearest keywords and each keyword's nearest blocks.
Stage 3 walks the keyword graph to the strongest-connected neighbors of
the stage-2 keywords and fetches their nearest blocks. The union keeps
each element's earliest stage tag, and the assembled prompt adds blocks
greedily until the token limit would be exceeded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, count_tokens
from .errors import ConsistencyError, ParameterError
from .kgraph import KnowledgeGraph
from .llm import ChatRequest, complete
from .prompts import render_task3
from .simgraph import _unit_rows, angles_to_vectors

logger = logging.getLogger(__name__)

STAGE_DIRECT = "direct"
STAGE_VIA_KEYWORD = "via-keyword"
STAGE_VIA_ADJACENCY = "via-adjacency"
STAGE_SIMILAR = "similar"
STAGE_ADJACENT = "adjacent"

_BLOCK_STAGE_ORDER = {STAGE_DIRECT: 0, STAGE_VIA_KEYWORD: 1, STAGE_VIA_ADJACENCY: 2}

DEFAULT_TOKEN_LIMIT = 10_000
DEFAULT_MAX_RESPONSE_TOKENS = 1024
# Per-keyword nearest-block lists are cached at this depth; deeper
# requests fall back to a fresh scan.
_KEYWORD_CACHE_DEPTH = 64


@dataclass(frozen=True)
class SearchParams:
    s_t0: int = 15
    s_k1: int = 5
    s_t1: int = 3
    s_k2: int = 3
    s_t2: int = 2

    def __post_init__(self):
        for name in ("s_t0", "s_k1", "s_t1", "s_k2", "s_t2"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be nonnegative")

    @property
    def max_keywords(self) -> int:
        return self.s_k1 * (1 + self.s_k2)

    @property
    def max_blocks(self) -> int:
        return self.s_t0 + self.s_k1 * self.s_t1 + self.s_k1 * self.s_k2 * self.s_t2


@dataclass
class BlockHit:
    id: int
    stage: str
    angle: float


@dataclass
class KeywordHit:
    id: int
    text: str
    stage: str


@dataclass
class SearchResult:
    query: str
    blocks: list[BlockHit] = field(default_factory=list)
    keywords: list[KeywordHit] = field(default_factory=list)

    def block_ids(self) -> list[int]:
        return [b.id for b in self.blocks]

    def keyword_texts(self) -> list[str]:
        return [k.text for k in self.keywords]

    def blocks_tagged(self, stage: str) -> list[BlockHit]:
        return [b for b in self.blocks if b.stage == stage]

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "keywords": [{"text": k.text, "stage": k.stage} for k in self.keywords],
            "blocks": [{"id": b.id, "stage": b.stage, "angle": b.angle} for b in self.blocks],
        }


class SearchIndex:
    """Unit-normalized matrices and per-keyword nearest-block caches.

    Building one of these per knowledge graph keeps repeated queries to
    a single scan of the block matrix each; results are identical to the
    uncached path.
    """

    def __init__(self, kg: KnowledgeGraph, vectors: np.ndarray):
        self.kg = kg
        self.block_unit = _unit_rows(np.asarray(vectors, dtype=np.float64))
        self.n_blocks = self.block_unit.shape[0]
        if kg.n_keywords:
            self.keyword_unit = _unit_rows(kg.keyword_embeddings)
        else:
            self.keyword_unit = np.zeros((0, self.block_unit.shape[1]))
        self._keyword_blocks: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def block_angles(self, query_vec: np.ndarray) -> np.ndarray:
        q = np.asarray(query_vec, dtype=np.float64)
        q = q / np.linalg.norm(q)
        return np.arccos(np.clip(self.block_unit @ q, -1.0, 1.0))

    def keyword_angles(self, query_vec: np.ndarray) -> np.ndarray:
        q = np.asarray(query_vec, dtype=np.float64)
        q = q / np.linalg.norm(q)
        return np.arccos(np.clip(self.keyword_unit @ q, -1.0, 1.0))

    def keyword_nearest_blocks(self, keyword_index: int, k: int) -> np.ndarray:
        cached = self._keyword_blocks.get(keyword_index)
        if cached is None or cached[0].size < min(k, self.n_blocks):
            angles = np.arccos(np.clip(
                self.block_unit @ self.keyword_unit[keyword_index], -1.0, 1.0))
            depth = min(self.n_blocks, max(k, _KEYWORD_CACHE_DEPTH))
            ids = top_k_by_angle(angles, depth)
            cached = (ids, angles[ids])
            self._keyword_blocks[keyword_index] = cached
        return cached[0][:k]


def top_k_by_angle(angles: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest angles, ties broken by smaller index."""
    n = angles.shape[0]
    k = min(k, n)
    if k == 0:
        return np.array([], dtype=np.int64)
    if k < n:
        part = np.argpartition(angles, k - 1)[:k]
        # argpartition gives an unordered, tie-arbitrary prefix; widen to
        # every index tying with the cutoff angle before the final sort.
        cutoff = angles[part].max()
        candidates = np.where(angles <= cutoff)[0]
    else:
        candidates = np.arange(n)
    order = np.lexsort((candidates, angles[candidates]))
    return candidates[order][:k]


def vector_search(query_vec: np.ndarray, index: SearchIndex, k: int) -> list[BlockHit]:
    """Plain vector-similarity retrieval: the k angle-nearest blocks."""
    angles = index.block_angles(query_vec)
    ids = top_k_by_angle(angles, k)
    return [BlockHit(id=int(i), stage=STAGE_DIRECT, angle=float(angles[i])) for i in ids]


def hybrid_search(
    query: str,
    kg: KnowledgeGraph,
    corpus: Corpus,
    vectors: np.ndarray,
    params: SearchParams,
    embedder,
    index: SearchIndex | None = None,
    query_vector: np.ndarray | None = None,
) -> SearchResult:
    """Run the three-stage search and return tagged blocks and keywords."""
    kg_hash = kg.manifest.get("corpus_hash")
    if kg_hash is not None and kg_hash != corpus.content_hash():
        raise ConsistencyError("knowledge graph was built from a different corpus")

    if index is None:
        index = SearchIndex(kg, vectors)
    qvec = np.asarray(query_vector if query_vector is not None else embedder(query),
                      dtype=np.float64)

    block_angles = index.block_angles(qvec)
    block_stage: dict[int, str] = {}

    for i in top_k_by_angle(block_angles, params.s_t0):
        block_stage.setdefault(int(i), STAGE_DIRECT)

    keywords: list[KeywordHit] = []
    if params.s_k1 > 0:
        if kg.n_keywords == 0:
            logger.warning("keyword graph is empty; degrading to vector-only search")
        else:
            kw_angles = index.keyword_angles(qvec)
            inner = [int(i) for i in top_k_by_angle(kw_angles, params.s_k1)]
            for i in inner:
                keywords.append(KeywordHit(id=i, text=kg.keywords[i], stage=STAGE_SIMILAR))
            for i in inner:
                for b in index.keyword_nearest_blocks(i, params.s_t1):
                    block_stage.setdefault(int(b), STAGE_VIA_KEYWORD)

            # Strongest-connected neighbors per inner keyword. The merged
            # set may overlap the inner circle; overlapping keywords keep
            # their similar tag but still get a stage-3 block fetch.
            outer: list[int] = []
            seen_outer: set[int] = set()
            inner_set = set(inner)
            for i in inner:
                nbr_ids, nbr_weights = kg.neighbors(i)
                if nbr_ids.size:
                    order = np.lexsort((nbr_ids, -nbr_weights))
                    for j in nbr_ids[order][:params.s_k2]:
                        j = int(j)
                        if j not in seen_outer:
                            seen_outer.add(j)
                            outer.append(j)
                            if j not in inner_set:
                                keywords.append(
                                    KeywordHit(id=j, text=kg.keywords[j], stage=STAGE_ADJACENT)
                                )
            for j in outer:
                for b in index.keyword_nearest_blocks(j, params.s_t2):
                    block_stage.setdefault(int(b), STAGE_VIA_ADJACENCY)

    blocks = [
        BlockHit(id=i, stage=stage, angle=float(block_angles[i]))
        for i, stage in block_stage.items()
    ]
    blocks.sort(key=lambda b: (_BLOCK_STAGE_ORDER[b.stage], b.angle, b.id))

    result = SearchResult(query=query, blocks=blocks, keywords=keywords)
    assert len(result.keywords) <= params.max_keywords
    assert len(result.blocks) <= params.max_blocks
    return result


def qa_token_budget(params: SearchParams, T: int, l2: int) -> int:
    """Worst-case retrieved-token count for one query under these parameters."""
    if T < 0 or l2 < 0:
        raise ParameterError("T and l2 must be nonnegative")
    return params.s_k1 * l2 * (1 + params.s_k2) + T * (
        params.s_t0 + params.s_k1 * params.s_t1 + params.s_k1 * params.s_k2 * params.s_t2
    )


def assemble_response_prompt(
    query: str,
    result: SearchResult,
    corpus: Corpus,
    token_limit: int = DEFAULT_TOKEN_LIMIT,
    language: str = "English",
    tokenizer_id: str = "whitespace",
) -> str:
    """Fill the answer template, adding blocks greedily under the token limit.

    Blocks are added in stage order (direct, via-keyword, via-adjacency),
    ascending angle to the query within each stage, until the next block
    would push the prompt past `token_limit`.
    """
    keywords = result.keyword_texts()
    empty = render_task3(language, keywords, [], query)
    if count_tokens(empty, tokenizer_id) > token_limit:
        raise ParameterError(
            f"token_limit {token_limit} is below the fixed prompt size"
        )
    included: list[str] = []
    prompt = empty
    for hit in result.blocks:
        candidate_texts = included + [corpus.blocks[hit.id].text]
        candidate = render_task3(language, keywords, candidate_texts, query)
        if count_tokens(candidate, tokenizer_id) > token_limit:
            break
        included = candidate_texts
        prompt = candidate
    return prompt


@dataclass
class QueryAnswer:
    answer: str
    result: SearchResult
    prompt: str
    prompt_tokens: int

    def to_dict(self) -> dict:
        payload = self.result.to_dict()
        payload["prompt_tokens"] = self.prompt_tokens
        payload["answer"] = self.answer
        return payload


def answer_query(
    query: str,
    kg: KnowledgeGraph,
    corpus: Corpus,
    vectors: np.ndarray,
    params: SearchParams,
    embedder,
    llm_provider,
    token_limit: int = DEFAULT_TOKEN_LIMIT,
    max_response_tokens: int = DEFAULT_MAX_RESPONSE_TOKENS,
    language: str = "English",
    index: SearchIndex | None = None,
) -> QueryAnswer:
    """hybrid_search -> prompt assembly -> chat completion, with provenance."""
    result = hybrid_search(query, kg, corpus, vectors, params, embedder, index=index)
    prompt = assemble_response_prompt(query, result, corpus, token_limit, language=language)
    request = ChatRequest(
        prompt=prompt,
        max_output_tokens=max_response_tokens,
        model_name=getattr(llm_provider, "model_name", "mock"),
    )
    answer = complete(request, llm_provider, task_id=3)
    return QueryAnswer(
        answer=answer,
        result=result,
        prompt=prompt,
        prompt_tokens=count_tokens(prompt),
    )
