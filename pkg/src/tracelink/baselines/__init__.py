"""Non-neural baseline scorers: TF-IDF/VSM, LSI, LDA, and the indicator-term model."""

from .tfidf import TfIdfModel, fit_tfidf, tfidf_matrix, tfidf_vector
from .lsi import LsiModel, fit_lsi, lsi_similarity_matrix
from .lda import LdaModel, fit_lda, lda_similarity_matrix
from .indicator import (
    IndicatorTermModel,
    fit_indicator_model,
    indicator_score,
    indicator_similarity_matrix,
)

__all__ = [
    "TfIdfModel",
    "fit_tfidf",
    "tfidf_vector",
    "tfidf_matrix",
    "LsiModel",
    "fit_lsi",
    "lsi_similarity_matrix",
    "LdaModel",
    "fit_lda",
    "lda_similarity_matrix",
    "IndicatorTermModel",
    "fit_indicator_model",
    "indicator_score",
    "indicator_similarity_matrix",
]
