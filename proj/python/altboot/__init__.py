"""Alternating retriever/reranker bootstrapping for zero-shot dense retrieval."""

from ._altboot import (
    Bm25Index,
    BootstrapConfig,
    BootstrapState,
    ConfigError,
    Corpus,
    DataError,
    DenseModel,
    Error,
    Passage,
    PassageMatrix,
    Query,
    QuerySet,
    RerankModel,
    RuntimeFailure,
    SyntheticWorld,
    corrupt,
    crop_queries,
    dense_search,
    derive_seed,
    encode_corpus,
    ensemble_search,
    extract_labels,
    iterate,
    load_corpus,
    load_qrels,
    load_queries,
    load_state,
    make_world,
    ndcg_at_k,
    recall_at_k,
    tokenize,
    warmup,
)

__version__ = "0.1.0"
