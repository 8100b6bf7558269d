"""tracelink: trace-link prediction between requirements and regulatory provisions."""

from .corpus import Corpus, PreprocessConfig, Provision, Requirement, load_corpus
from .embeddings import (
    EmbeddingSet,
    SimilarityMatrix,
    build_similarity_matrix,
    cosine,
    hash_embed,
    load_embedding_set,
)
from .linker import (
    PredictionSet,
    predict_constant,
    predict_delta,
    predict_dynamic,
    sweep_thresholds,
    tune_threshold,
)

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "PreprocessConfig",
    "Provision",
    "Requirement",
    "load_corpus",
    "EmbeddingSet",
    "SimilarityMatrix",
    "build_similarity_matrix",
    "cosine",
    "hash_embed",
    "load_embedding_set",
    "PredictionSet",
    "predict_constant",
    "predict_delta",
    "predict_dynamic",
    "tune_threshold",
    "sweep_thresholds",
    "__version__",
]
