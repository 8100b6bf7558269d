"""TF-IDF weighting and vector-space cosine scoring.

idf uses the smoothed form ln((1 + N) / (1 + df)) + 1, so a term present in
every document still gets weight 1 and rare terms are never cut (no minimum
frequency cutoff). An optional maximum document-frequency cutoff drops terms
with df/N strictly above the limit.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..corpus import PreprocessConfig
from ..embeddings import SimilarityMatrix, ZeroNormError


class TfIdfError(ValueError):
    pass


@dataclass
class TfIdfModel:
    vocabulary: tuple[str, ...]
    idf: np.ndarray
    config: PreprocessConfig
    max_df_cutoff: float | None = None
    term_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise TfIdfError("vocabulary contains duplicates")
        self.idf = np.asarray(self.idf, dtype=float)
        if self.idf.shape != (len(self.vocabulary),):
            raise TfIdfError("idf length does not match vocabulary")
        if not np.all(np.isfinite(self.idf)) or np.any(self.idf < 0):
            raise TfIdfError("idf weights must be finite and non-negative")
        self.term_index = {t: i for i, t in enumerate(self.vocabulary)}

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "kind": "tfidf",
            "vocabulary": list(self.vocabulary),
            "idf": [float(x) for x in self.idf],
            "max_df_cutoff": self.max_df_cutoff,
            "config": {
                "lowercase": self.config.lowercase,
                "strip_punctuation": self.config.strip_punctuation,
                "remove_stopwords": self.config.remove_stopwords,
                "stem": self.config.stem,
            },
        }


def fit_tfidf(
    docs: Sequence[Sequence[str]],
    max_df: float | None = None,
    config: PreprocessConfig | None = None,
) -> TfIdfModel:
    """Fit idf weights over tokenized documents.

    ``config`` records the preprocessing that produced the tokens; it is
    carried for provenance and reuse when vectorizing queries.
    """
    docs = [list(d) for d in docs]
    if not docs or all(len(d) == 0 for d in docs):
        raise TfIdfError("cannot fit TF-IDF on an all-empty corpus")
    n_docs = len(docs)
    df: Counter[str] = Counter()
    for doc in docs:
        df.update(set(doc))
    terms = sorted(
        t for t, count in df.items()
        if max_df is None or count / n_docs <= max_df
    )
    if not terms:
        raise TfIdfError("max_df cutoff removed every term")
    idf = np.array(
        [math.log((1 + n_docs) / (1 + df[t])) + 1.0 for t in terms], dtype=float
    )
    return TfIdfModel(
        vocabulary=tuple(terms),
        idf=idf,
        config=config or PreprocessConfig(),
        max_df_cutoff=max_df,
    )


def tfidf_vector(model: TfIdfModel, tokens: Sequence[str]) -> dict[str, float]:
    """Sparse L2-normalized tf.idf vector; an empty result flags a degenerate doc."""
    counts = Counter(t for t in tokens if t in model.term_index)
    if not counts:
        return {}
    weights = {
        t: count * float(model.idf[model.term_index[t]])
        for t, count in counts.items()
    }
    norm = math.sqrt(sum(w * w for w in weights.values()))
    return {t: w / norm for t, w in weights.items()}


def tfidf_matrix(model: TfIdfModel, docs: Sequence[Sequence[str]]) -> np.ndarray:
    """Dense docs-by-terms matrix of L2-normalized tf.idf rows.

    All-out-of-vocabulary documents produce zero rows; callers decide
    whether those are acceptable.
    """
    out = np.zeros((len(docs), len(model.vocabulary)), dtype=float)
    for i, doc in enumerate(docs):
        for term, weight in tfidf_vector(model, doc).items():
            out[i, model.term_index[term]] = weight
    return out


def tfidf_similarity_matrix(
    model: TfIdfModel,
    reqs: Mapping[str, Sequence[str]],
    provs: Mapping[str, Sequence[str]],
) -> SimilarityMatrix:
    """Cosine of requirement tf.idf vectors against provision tf.idf vectors."""
    req_ids = tuple(reqs)
    prov_codes = tuple(provs)
    r = tfidf_matrix(model, [reqs[i] for i in req_ids])
    p = tfidf_matrix(model, [provs[c] for c in prov_codes])
    for idx, rid in enumerate(req_ids):
        if not r[idx].any():
            raise ZeroNormError(f"requirement '{rid}' is out-of-vocabulary")
    for idx, code in enumerate(prov_codes):
        if not p[idx].any():
            raise ZeroNormError(f"provision '{code}' is out-of-vocabulary")
    scores = np.clip(r @ p.T, -1.0, 1.0)
    return SimilarityMatrix(req_ids=req_ids, prov_codes=prov_codes, scores=scores)


def save_tfidf(model: TfIdfModel, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(model.to_dict(), sort_keys=True) + "\n", encoding="utf-8"
    )


def load_tfidf(path: str | Path) -> TfIdfModel:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("kind") != "tfidf" or data.get("format_version") != 1:
        raise TfIdfError(f"{path}: not a version-1 tfidf model dump")
    cfg = data["config"]
    return TfIdfModel(
        vocabulary=tuple(data["vocabulary"]),
        idf=np.asarray(data["idf"], dtype=float),
        config=PreprocessConfig(
            lowercase=cfg["lowercase"],
            strip_punctuation=cfg["strip_punctuation"],
            remove_stopwords=cfg["remove_stopwords"],
            stem=cfg["stem"],
        ),
        max_df_cutoff=data.get("max_df_cutoff"),
    )
