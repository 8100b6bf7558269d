"""Indicator-term classifier: provision-specific keyword weights.

Each (term, provision) weight is the product of three factors estimated
from training documents:

  f1  normalized frequency of the term across requirements traced to the
      provision (term occurrences over total tokens in those requirements),
  f2  fraction of the provision's traced requirements containing the term,
  f3  fraction of training documents that have traced requirements for the
      provision in which the term appears inside such a requirement.

A requirement's score for a provision is the weight mass of the indicator
terms it contains, normalized by the provision's total weight mass, so
scores live in [0, 1] and adding an indicator term never lowers the score.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..corpus import Corpus, PreprocessConfig, preprocess
from ..embeddings import SimilarityMatrix


class IndicatorError(ValueError):
    pass


@dataclass
class IndicatorTermModel:
    weights: dict[str, dict[str, float]]
    normalizers: dict[str, float]
    uncovered: frozenset[str] = frozenset()

    def __post_init__(self):
        for code, terms in self.weights.items():
            for term, w in terms.items():
                if not np.isfinite(w) or w < 0:
                    raise IndicatorError(
                        f"weight for ({term!r}, {code!r}) must be finite and >= 0"
                    )

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "kind": "indicator",
            "weights": {
                code: {t: float(w) for t, w in sorted(terms.items())}
                for code, terms in sorted(self.weights.items())
            },
            "normalizers": {c: float(v) for c, v in sorted(self.normalizers.items())},
            "uncovered": sorted(self.uncovered),
        }


def fit_indicator_model(
    corpus: Corpus,
    train_doc_ids: Iterable[str],
    config: PreprocessConfig | None = None,
) -> IndicatorTermModel:
    """Estimate indicator-term weights from the training documents' trace links.

    Provisions with no positive training link get an empty weight table and
    are flagged in ``uncovered``; they always score 0 downstream.
    """
    config = config or PreprocessConfig()
    train_ids = set(train_doc_ids)
    known = {d.id for d in corpus.documents}
    unknown = sorted(train_ids - known)
    if unknown:
        raise IndicatorError(f"unknown training document ids: {unknown}")

    req_tokens: dict[str, list[str]] = {}
    req_doc: dict[str, str] = {}
    for doc in corpus.documents:
        if doc.id not in train_ids:
            continue
        for req in doc.requirements:
            req_tokens[req.id] = preprocess(req.text, config)
            req_doc[req.id] = doc.id

    positives_exist = any(
        corpus.ground_truth.codes_for(rid) for rid in req_tokens
    )
    if not positives_exist:
        raise IndicatorError("training documents contain no positive trace links")

    weights: dict[str, dict[str, float]] = {}
    normalizers: dict[str, float] = {}
    uncovered: set[str] = set()
    for provision in corpus.catalog:
        code = provision.code
        traced = [
            rid for rid in req_tokens if corpus.ground_truth.has_link(rid, code)
        ]
        if not traced:
            weights[code] = {}
            normalizers[code] = 0.0
            uncovered.add(code)
            continue
        term_freq: Counter[str] = Counter()
        containing: Counter[str] = Counter()
        docs_with_term: dict[str, set[str]] = {}
        total_tokens = 0
        for rid in traced:
            tokens = req_tokens[rid]
            total_tokens += len(tokens)
            term_freq.update(tokens)
            for term in set(tokens):
                containing[term] += 1
                docs_with_term.setdefault(term, set()).add(req_doc[rid])
        docs_with_code = {req_doc[rid] for rid in traced}
        table: dict[str, float] = {}
        for term, freq in term_freq.items():
            f1 = freq / total_tokens if total_tokens else 0.0
            f2 = containing[term] / len(traced)
            f3 = len(docs_with_term[term]) / len(docs_with_code)
            weight = f1 * f2 * f3
            if weight > 0.0:
                table[term] = weight
        weights[code] = table
        normalizers[code] = sum(table.values())
    return IndicatorTermModel(
        weights=weights, normalizers=normalizers, uncovered=frozenset(uncovered)
    )


def indicator_score(
    model: IndicatorTermModel, req_tokens: Sequence[str], prov_code: str
) -> float:
    """Weight mass of indicator terms present in the requirement, normalized."""
    if prov_code not in model.weights:
        raise IndicatorError(f"model has no weights entry for '{prov_code}'")
    normalizer = model.normalizers.get(prov_code, 0.0)
    if normalizer == 0.0:
        return 0.0
    table = model.weights[prov_code]
    present = set(req_tokens) & table.keys()
    return sum(table[t] for t in present) / normalizer


def indicator_similarity_matrix(
    model: IndicatorTermModel,
    reqs: Mapping[str, Sequence[str]],
    prov_codes: Sequence[str],
) -> SimilarityMatrix:
    """Score grid over requirements and provisions, reusing the matrix contract."""
    req_ids = tuple(reqs)
    codes = tuple(prov_codes)
    scores = np.zeros((len(req_ids), len(codes)), dtype=float)
    for i, rid in enumerate(req_ids):
        for j, code in enumerate(codes):
            scores[i, j] = indicator_score(model, reqs[rid], code)
    return SimilarityMatrix(req_ids=req_ids, prov_codes=codes, scores=scores)


def save_indicator(model: IndicatorTermModel, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(model.to_dict(), sort_keys=True) + "\n", encoding="utf-8"
    )


def load_indicator(path: str | Path) -> IndicatorTermModel:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("kind") != "indicator" or data.get("format_version") != 1:
        raise IndicatorError(f"{path}: not a version-1 indicator model dump")
    return IndicatorTermModel(
        weights={c: dict(t) for c, t in data["weights"].items()},
        normalizers=dict(data["normalizers"]),
        uncovered=frozenset(data.get("uncovered", [])),
    )
