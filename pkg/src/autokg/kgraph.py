"""Keyword knowledge graph: harmonic keyword-block association, the
integer co-association weight matrix, persistence, and subgraph export.

Each keyword is embedded and the n1 angle-nearest blocks get label 1,
the n2 angle-farthest get label 0; harmonic propagation fills in the
rest and the keyword's block set is everywhere u >= 0.5. The edge weight
between two keywords is the number of blocks their sets share.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import __about__
from .corpus import Corpus
from .errors import CorruptArtifactError, MigrationError, ParameterError
from .extraction import KeywordSet
from .laplace import LabelAssignment, laplace_learn
from .simgraph import SimilarityGraph, angles_to_vectors

logger = logging.getLogger(__name__)

KG_FORMAT_VERSION = 1

DEFAULT_N1 = 5
DEFAULT_N2 = 35

ASSOCIATION_THRESHOLD = 0.5


@dataclass
class KeywordAssociation:
    keyword: str
    embedding: np.ndarray
    block_ids: frozenset[int]
    u_values: np.ndarray | None = None


@dataclass
class KnowledgeGraph:
    keywords: tuple[str, ...]
    keyword_embeddings: np.ndarray
    weights: sp.csr_matrix  # symmetric, integer, zero diagonal
    associations: list[KeywordAssociation]
    manifest: dict = field(default_factory=dict)

    @property
    def n_keywords(self) -> int:
        return len(self.keywords)

    def neighbors(self, keyword_index: int) -> tuple[np.ndarray, np.ndarray]:
        """Positive-weight neighbor ids and weights for one keyword."""
        row = self.weights.getrow(keyword_index).tocoo()
        mask = row.data > 0
        return row.col[mask], row.data[mask]

    def degree_distribution(self) -> np.ndarray:
        """Per-keyword count of positive-weight neighbors."""
        return np.asarray((self.weights > 0).sum(axis=1)).ravel()

    def validate_invariants(self) -> None:
        W = self.weights
        if (abs(W - W.T)).nnz:
            raise ParameterError("keyword weight matrix is not symmetric")
        if W.nnz and W.data.min() < 0:
            raise ParameterError("keyword weight matrix has negative entries")
        if np.any(W.diagonal() != 0):
            raise ParameterError("keyword weight matrix has nonzero diagonal")
        sizes = np.array([len(a.block_ids) for a in self.associations])
        coo = W.tocoo()
        for i, j, w in zip(coo.row, coo.col, coo.data):
            if w > min(sizes[i], sizes[j]):
                raise ParameterError(
                    f"weight {w} between keywords {i},{j} exceeds min association size"
                )

    def equals(self, other: "KnowledgeGraph") -> bool:
        if self.keywords != other.keywords:
            return False
        if not np.array_equal(self.keyword_embeddings, other.keyword_embeddings):
            return False
        if (self.weights != other.weights).nnz:
            return False
        if len(self.associations) != len(other.associations):
            return False
        for a, b in zip(self.associations, other.associations):
            if a.keyword != b.keyword or a.block_ids != b.block_ids:
                return False
            if not np.array_equal(a.embedding, b.embedding):
                return False
        return self.manifest == other.manifest


def associate_keyword(
    keyword: str,
    vectors: np.ndarray,
    graph: SimilarityGraph,
    embedder,
    n1: int = DEFAULT_N1,
    n2: int = DEFAULT_N2,
    tol: float = 1e-8,
    max_iter: int | None = None,
    keyword_vector: np.ndarray | None = None,
    keep_u: bool = False,
) -> KeywordAssociation:
    """Attach a keyword to its harmonically associated block set.

    The n1 nearest blocks by angle to the keyword embedding seed label 1
    and the n2 farthest seed label 0 (both tie-breaking toward smaller
    block ids); the block set is every node where the propagated value
    reaches 0.5.
    """
    if not keyword:
        raise ParameterError("keyword must be non-empty")
    if n1 < 1 or n2 < 1:
        raise ParameterError(f"n1 and n2 must be >= 1, got n1={n1}, n2={n2}")
    vectors = np.asarray(vectors, dtype=np.float64)
    N = vectors.shape[0]
    if n1 + n2 > N:
        raise ParameterError(f"n1 + n2 = {n1 + n2} exceeds the number of blocks {N}")

    vec = np.asarray(keyword_vector if keyword_vector is not None else embedder(keyword),
                     dtype=np.float64)
    angles = angles_to_vectors(vec, vectors)
    order = np.lexsort((np.arange(N), angles))
    nearest = order[:n1]
    farthest = order[N - n2:]

    labels = LabelAssignment.from_pairs(
        [(int(i), 1.0) for i in nearest] + [(int(i), 0.0) for i in farthest]
    )
    solution = laplace_learn(graph, labels, tol=tol, max_iter=max_iter)
    block_ids = frozenset(int(i) for i in np.where(solution.u >= ASSOCIATION_THRESHOLD)[0])
    return KeywordAssociation(
        keyword=keyword,
        embedding=vec,
        block_ids=block_ids,
        u_values=solution.u if keep_u else None,
    )


def _intersection_weights(associations: list[KeywordAssociation], n_blocks: int) -> sp.csr_matrix:
    M = len(associations)
    membership = np.zeros((M, n_blocks), dtype=np.int64)
    for row, assoc in enumerate(associations):
        if assoc.block_ids:
            membership[row, sorted(assoc.block_ids)] = 1
    W = membership @ membership.T
    np.fill_diagonal(W, 0)
    return sp.csr_matrix(W)


def kg_from_associations(
    associations: list[KeywordAssociation],
    n_blocks: int,
    manifest: dict | None = None,
) -> KnowledgeGraph:
    """Assemble a KnowledgeGraph once every keyword has its block set."""
    keywords = tuple(a.keyword for a in associations)
    if len(set(keywords)) != len(keywords):
        raise ParameterError("duplicate keywords in association list")
    embeddings = (
        np.vstack([a.embedding for a in associations])
        if associations else np.zeros((0, 0))
    )
    weights = _intersection_weights(associations, n_blocks)
    base_manifest = {
        "format_version": KG_FORMAT_VERSION,
        "corpus_hash": None,
        "params": {},
        "M": len(associations),
        "nnz": int(weights.nnz),
        "n_blocks": int(n_blocks),
        "versions": {"autokg": __about__.__version__},
    }
    if manifest:
        base_manifest.update(manifest)
        base_manifest["M"] = len(associations)
        base_manifest["nnz"] = int(weights.nnz)
        base_manifest["n_blocks"] = int(n_blocks)
    return KnowledgeGraph(
        keywords=keywords,
        keyword_embeddings=embeddings,
        weights=weights,
        associations=associations,
        manifest=base_manifest,
    )


def build_kg(
    keywords: KeywordSet | list[str],
    corpus: Corpus,
    vectors: np.ndarray,
    graph: SimilarityGraph,
    embedder,
    n1: int = DEFAULT_N1,
    n2: int = DEFAULT_N2,
    tol: float = 1e-8,
    max_workers: int = 4,
    manifest_params: dict | None = None,
) -> KnowledgeGraph:
    """Associate every keyword and assemble the co-association graph."""
    keyword_list = keywords.keywords if isinstance(keywords, KeywordSet) else list(keywords)
    if not keyword_list:
        raise ParameterError("keyword set must be non-empty")
    vectors = np.asarray(vectors, dtype=np.float64)

    if hasattr(embedder, "embed_batch"):
        keyword_vectors = embedder.embed_batch(keyword_list)
    else:
        keyword_vectors = [embedder(kw) for kw in keyword_list]

    def solve(index: int) -> KeywordAssociation:
        try:
            return associate_keyword(
                keyword_list[index], vectors, graph, embedder,
                n1=n1, n2=n2, tol=tol, keyword_vector=keyword_vectors[index],
            )
        except Exception as exc:
            raise type(exc)(f"keyword {keyword_list[index]!r}: {exc}") from exc

    workers = max(1, min(max_workers, len(keyword_list)))
    if workers == 1:
        associations = [solve(i) for i in range(len(keyword_list))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            associations = list(pool.map(solve, range(len(keyword_list))))

    manifest = {
        "corpus_hash": corpus.content_hash(),
        "params": dict(manifest_params or {}),
    }
    kg = kg_from_associations(associations, len(corpus), manifest)
    kg.validate_invariants()
    return kg


def _canonical_payload(kg: KnowledgeGraph) -> dict:
    coo = sp.triu(kg.weights, k=1).tocoo()
    return {
        "manifest": kg.manifest,
        "keywords": list(kg.keywords),
        "keyword_embeddings": [[float(x) for x in row] for row in kg.keyword_embeddings],
        "triplets": [[int(i), int(j), int(w)] for i, j, w in zip(coo.row, coo.col, coo.data)],
        "block_ids": [sorted(a.block_ids) for a in kg.associations],
    }


def save_kg(kg: KnowledgeGraph, path: str | Path) -> None:
    """Write the KG as canonical JSON with an integrity checksum."""
    payload = _canonical_payload(kg)
    body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    checksum = hashlib.sha256(body.encode("utf-8")).hexdigest()
    Path(path).write_text(
        json.dumps({"checksum": checksum, "payload": payload},
                   sort_keys=True, separators=(",", ":")),
        encoding="utf-8",
    )


def load_kg(path: str | Path) -> KnowledgeGraph:
    """Load a saved KG; fails on checksum mismatch or unknown version."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        container = json.loads(raw)
        payload = container["payload"]
        stored_checksum = container["checksum"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorruptArtifactError(f"unreadable KG file {path}: {exc}") from exc
    body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    if hashlib.sha256(body.encode("utf-8")).hexdigest() != stored_checksum:
        raise CorruptArtifactError(f"checksum mismatch in KG file {path}")

    manifest = payload["manifest"]
    if manifest.get("format_version") != KG_FORMAT_VERSION:
        raise MigrationError(
            f"KG format version {manifest.get('format_version')} is not supported"
        )

    keywords = payload["keywords"]
    embeddings = np.asarray(payload["keyword_embeddings"], dtype=np.float64)
    if embeddings.size == 0:
        embeddings = np.zeros((0, 0))
    block_ids = [frozenset(ids) for ids in payload["block_ids"]]
    M = len(keywords)
    triplets = payload["triplets"]
    if triplets:
        i, j, w = zip(*triplets)
    else:
        i, j, w = (), (), ()
    upper = sp.coo_matrix((w, (i, j)), shape=(M, M), dtype=np.int64).tocsr()
    weights = (upper + upper.T).tocsr()

    associations = [
        KeywordAssociation(keyword=kw, embedding=embeddings[idx], block_ids=block_ids[idx])
        for idx, kw in enumerate(keywords)
    ]
    return KnowledgeGraph(
        keywords=tuple(keywords),
        keyword_embeddings=embeddings,
        weights=weights,
        associations=associations,
        manifest=manifest,
    )


def _dot_escape(label: str) -> str:
    return label.replace("\\", "\\\\").replace('"', '\\"')


def _subgraph_elements(kg, inner, outer, block_ids, query_label):
    nodes = [{"id": "query", "kind": "query", "label": query_label}]
    for i in inner:
        nodes.append({"id": f"kw{i}", "kind": "inner-keyword", "label": kg.keywords[i]})
    for j in outer:
        if j in inner:
            continue
        nodes.append({"id": f"kw{j}", "kind": "outer-keyword", "label": kg.keywords[j]})
    for b in block_ids or []:
        nodes.append({"id": f"block{b}", "kind": "block", "label": f"block {b}"})

    edges = []
    for i in inner:
        edges.append({"source": "query", "target": f"kw{i}", "kind": "similarity", "weight": None})
    for i in inner:
        for j in outer:
            if j == i or j in inner:
                continue
            w = int(kg.weights[i, j])
            if w > 0:
                edges.append({"source": f"kw{i}", "target": f"kw{j}",
                              "kind": "adjacency", "weight": w})
    return nodes, edges


def export_subgraph(
    kg: KnowledgeGraph,
    inner: list[int],
    outer: list[int],
    block_ids: list[int] | None = None,
    query_label: str = "query",
    fmt: str = "dot",
) -> str:
    """Render a query-centered subgraph as DOT or JSON.

    The query node links to the inner-circle keywords; inner keywords
    link to outer-circle keywords along positive adjacency weights.
    Edges among outer keywords are omitted. Optional text-block nodes are
    included without edges.
    """
    for idx in list(inner) + list(outer):
        if not 0 <= idx < kg.n_keywords:
            raise ParameterError(f"keyword index {idx} out of range")
    nodes, edges = _subgraph_elements(kg, list(inner), list(outer), block_ids, query_label)
    if fmt == "json":
        return json.dumps({"nodes": nodes, "edges": edges}, indent=2)
    if fmt == "dot":
        lines = ["graph keyword_subgraph {"]
        for node in nodes:
            lines.append(
                f'  "{node["id"]}" [label="{_dot_escape(node["label"])}", kind="{node["kind"]}"];'
            )
        for edge in edges:
            attr = f' [weight={edge["weight"]}]' if edge["weight"] is not None else ""
            lines.append(f'  "{edge["source"]}" -- "{edge["target"]}"{attr};')
        lines.append("}")
        return "\n".join(lines) + "\n"
    raise ParameterError(f"unknown export format: {fmt!r}")


def export_full_graph(kg: KnowledgeGraph, fmt: str = "dot") -> str:
    """Render the whole keyword graph: all keywords, positive-weight edges."""
    coo = sp.triu(kg.weights, k=1).tocoo()
    if fmt == "json":
        nodes = [{"id": f"kw{i}", "kind": "keyword", "label": kw}
                 for i, kw in enumerate(kg.keywords)]
        edges = [{"source": f"kw{i}", "target": f"kw{j}", "kind": "adjacency", "weight": int(w)}
                 for i, j, w in zip(coo.row, coo.col, coo.data) if w > 0]
        return json.dumps({"nodes": nodes, "edges": edges}, indent=2)
    if fmt == "dot":
        lines = ["graph keyword_graph {"]
        for i, kw in enumerate(kg.keywords):
            lines.append(f'  "kw{i}" [label="{_dot_escape(kw)}"];')
        for i, j, w in zip(coo.row, coo.col, coo.data):
            if w > 0:
                lines.append(f'  "kw{i}" -- "kw{j}" [weight={int(w)}];')
        lines.append("}")
        return "\n".join(lines) + "\n"
    raise ParameterError(f"unknown export format: {fmt!r}")
