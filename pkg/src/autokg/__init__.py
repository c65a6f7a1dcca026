"""autokg: automatic keyword knowledge graphs over text corpora.

The pipeline chunks a corpus into bounded text blocks, embeds them,
builds a sparse KNN similarity graph with Gaussian-of-angle weights,
extracts keywords with an LLM over two clusterings, associates each
keyword with text blocks through harmonic label propagation, and weights
keyword pairs by how many blocks they share. Queries run a hybrid search
that unions vector similarity with keyword-graph adjacency before the
answer prompt is assembled.
"""

from .__about__ import __version__
from .corpus import Corpus, TextBlock, chunk, count_tokens, load_documents
from .embedding import (
    CachingEmbedder,
    EmbeddingCache,
    EmbeddingProviderConfig,
    OfflineHashEmbedder,
    RemoteEmbeddingProvider,
    embed_batch,
    offline_hash_embed,
)
from .simgraph import (
    GraphLaplacian,
    SimilarityGraph,
    angle,
    build_similarity_graph,
    knn,
    laplacian,
    load_graph,
    save_graph,
    similarity_weight,
)
from .laplace import HarmonicSolution, LabelAssignment, laplace_learn
from .clustering import ClusterResult, ClusterSample, kmeans, sample_cluster, spectral
from .llm import (
    ChatProviderConfig,
    ChatRequest,
    RemoteChatProvider,
    ScriptedMockProvider,
    TranscriptRecord,
    complete,
    scripted_mock,
)
from .extraction import (
    ExtractionParams,
    KeywordSet,
    TokenBudget,
    build_task1_prompt,
    extract_keywords,
    kg_token_budget,
    parse_keywords,
    refine_keywords,
)
from .kgraph import (
    KeywordAssociation,
    KnowledgeGraph,
    associate_keyword,
    build_kg,
    export_full_graph,
    export_subgraph,
    kg_from_associations,
    load_kg,
    save_kg,
)
from .hybrid import (
    QueryAnswer,
    SearchIndex,
    SearchParams,
    SearchResult,
    answer_query,
    assemble_response_prompt,
    hybrid_search,
    qa_token_budget,
    vector_search,
)
from .config import EngineConfig, load_config
from .pipeline import bench_search, build, load_artifacts

__all__ = [
    "__version__",
    "Corpus", "TextBlock", "chunk", "count_tokens", "load_documents",
    "CachingEmbedder", "EmbeddingCache", "EmbeddingProviderConfig",
    "OfflineHashEmbedder", "RemoteEmbeddingProvider", "embed_batch", "offline_hash_embed",
    "GraphLaplacian", "SimilarityGraph", "angle", "build_similarity_graph", "knn",
    "laplacian", "load_graph", "save_graph", "similarity_weight",
    "HarmonicSolution", "LabelAssignment", "laplace_learn",
    "ClusterResult", "ClusterSample", "kmeans", "sample_cluster", "spectral",
    "ChatProviderConfig", "ChatRequest", "RemoteChatProvider", "ScriptedMockProvider",
    "TranscriptRecord", "complete", "scripted_mock",
    "ExtractionParams", "KeywordSet", "TokenBudget", "build_task1_prompt",
    "extract_keywords", "kg_token_budget", "parse_keywords", "refine_keywords",
    "KeywordAssociation", "KnowledgeGraph", "associate_keyword", "build_kg",
    "export_full_graph", "export_subgraph", "kg_from_associations", "load_kg", "save_kg",
    "QueryAnswer", "SearchIndex", "SearchParams", "SearchResult", "answer_query",
    "assemble_response_prompt", "hybrid_search", "qa_token_budget", "vector_search",
    "EngineConfig", "load_config",
    "bench_search", "build", "load_artifacts",
]
