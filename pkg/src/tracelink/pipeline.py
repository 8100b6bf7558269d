"""Glue that binds corpus, scorers, linker, and evaluation into experiment runs.

Score matrices are computed over sentence units (a multi-sentence
requirement contributes one row per sentence) and pooled back to the parent
requirement before thresholding: a provision traces to a requirement when
it traces to any of its sentences, and for strict-exceedance thresholds the
union of per-sentence predictions equals thresholding the per-requirement
maximum score, so the pooled matrix is used for constant/tuned strategies
while delta and dynamic predict per unit and union the results.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import (
    Corpus,
    PreprocessConfig,
    preprocess,
    provision_text,
    requirement_units,
    unit_parent,
)
from .embeddings import (
    EmbeddingSet,
    SimilarityMatrix,
    build_similarity_matrix,
    hash_embed_set,
)
from .evaluation import (
    ConfusionCounts,
    MetricsReport,
    RequirementLevelReport,
    confusion,
    f_beta,
    map_score,
    pooled_pairs,
    precision,
    recall,
    requirement_level_report,
    roc_auc,
)
from .linker import (
    PredictionSet,
    build_negative_bank,
    predict_constant,
    predict_delta,
    predict_dynamic,
    tune_threshold,
    union_to_requirements,
)
from .baselines.indicator import fit_indicator_model, indicator_similarity_matrix
from .baselines.lda import fit_lda, lda_similarity_matrix
from .baselines.lsi import fit_lsi, lsi_similarity_matrix
from .baselines.tfidf import fit_tfidf, tfidf_matrix, tfidf_similarity_matrix

THRESHOLD_STRATEGIES = ("constant", "dynamic", "delta", "tuned")
BASELINE_STRATEGIES = ("tfidf", "lsi", "lda", "indicator")

LSI_PREPROCESS = PreprocessConfig(stem=False)
LDA_PREPROCESS = PreprocessConfig(stem=True)


class PipelineError(ValueError):
    pass


def embed_corpus_hash(
    corpus: Corpus,
    dim: int,
    seed: int,
    doc_ids: Sequence[str] | None = None,
    split: bool = True,
) -> tuple[EmbeddingSet, EmbeddingSet, list[tuple[str, str, str]]]:
    """Hash-provider embeddings for requirement units and provisions."""
    units = requirement_units(corpus, doc_ids=doc_ids, split=split)
    req_set = hash_embed_set([(uid, text) for uid, _, text in units], dim, seed)
    prov_set = hash_embed_set(
        [(p.code, provision_text(p)) for p in corpus.catalog], dim, seed
    )
    return req_set, prov_set, units


def pool_to_requirements(matrix: SimilarityMatrix) -> SimilarityMatrix:
    """Max-pool sentence-unit rows to one row per parent requirement."""
    parents: list[str] = []
    for uid in matrix.req_ids:
        parent = unit_parent(uid)
        if parent not in parents:
            parents.append(parent)
    rows = np.full((len(parents), len(matrix.prov_codes)), -np.inf)
    index = {rid: i for i, rid in enumerate(parents)}
    for i, uid in enumerate(matrix.req_ids):
        j = index[unit_parent(uid)]
        rows[j] = np.maximum(rows[j], matrix.scores[i])
    return SimilarityMatrix(
        req_ids=tuple(parents), prov_codes=matrix.prov_codes, scores=rows
    )


def _restrict_gt(corpus: Corpus, req_ids: Sequence[str]) -> dict[str, frozenset[str]]:
    return {rid: corpus.ground_truth.codes_for(rid) for rid in req_ids}


def _doc_req_ids(corpus: Corpus, doc_ids: Sequence[str]) -> list[str]:
    wanted = set(doc_ids)
    return [r.id for r in corpus.requirements if r.doc_id in wanted]


@dataclass
class ScoreSurfaces:
    """Unit-level and requirement-pooled score matrices for one scorer."""

    unit_matrix: SimilarityMatrix
    req_matrix: SimilarityMatrix


def hash_similarity_surfaces(
    corpus: Corpus,
    dim: int,
    seed: int,
    doc_ids: Sequence[str] | None = None,
    split: bool = True,
) -> tuple[ScoreSurfaces, EmbeddingSet]:
    req_set, prov_set, _ = embed_corpus_hash(
        corpus, dim, seed, doc_ids=doc_ids, split=split
    )
    unit_matrix = build_similarity_matrix(req_set, prov_set)
    return (
        ScoreSurfaces(unit_matrix=unit_matrix, req_matrix=pool_to_requirements(unit_matrix)),
        req_set,
    )


def _unit_tokens(
    corpus: Corpus,
    config: PreprocessConfig,
    doc_ids: Sequence[str] | None,
    split: bool = True,
) -> dict[str, list[str]]:
    return {
        uid: preprocess(text, config)
        for uid, _, text in requirement_units(corpus, doc_ids=doc_ids, split=split)
    }


def _prov_tokens(corpus: Corpus, config: PreprocessConfig) -> dict[str, list[str]]:
    return {p.code: preprocess(provision_text(p), config) for p in corpus.catalog}


def tfidf_surfaces(
    corpus: Corpus,
    fit_doc_ids: Sequence[str],
    score_doc_ids: Sequence[str],
    config: PreprocessConfig = LSI_PREPROCESS,
    max_df: float | None = None,
) -> ScoreSurfaces:
    """TF-IDF cosine surfaces fit on one document set, scored on another.

    The model is fit over the fit documents' requirement sentences plus the
    provision texts (queries must share the fitted vocabulary).
    """
    fit_units = _unit_tokens(corpus, config, fit_doc_ids)
    provs = _prov_tokens(corpus, config)
    model = fit_tfidf(list(fit_units.values()) + list(provs.values()), max_df=max_df, config=config)
    score_units = _unit_tokens(corpus, config, score_doc_ids)
    unit_matrix = tfidf_similarity_matrix(model, score_units, provs)
    return ScoreSurfaces(unit_matrix=unit_matrix, req_matrix=pool_to_requirements(unit_matrix))


def lsi_surfaces(
    corpus: Corpus,
    fit_doc_ids: Sequence[str],
    score_doc_ids: Sequence[str],
    k: int | None = None,
    config: PreprocessConfig = LSI_PREPROCESS,
) -> ScoreSurfaces:
    """LSI latent-space cosine surfaces; k defaults to min(50, full rank)."""
    fit_units = _unit_tokens(corpus, config, fit_doc_ids)
    provs = _prov_tokens(corpus, config)
    fit_docs = list(fit_units.values()) + list(provs.values())
    model_tfidf = fit_tfidf(fit_docs, config=config)
    grid = tfidf_matrix(model_tfidf, fit_docs)
    max_k = min(grid.shape)
    k = min(50, max_k) if k is None else k
    model = fit_lsi(grid, k)
    score_units = _unit_tokens(corpus, config, score_doc_ids)
    req_vectors = {
        uid: row
        for uid, row in zip(
            score_units, tfidf_matrix(model_tfidf, list(score_units.values()))
        )
    }
    prov_vectors = {
        code: row
        for code, row in zip(provs, tfidf_matrix(model_tfidf, list(provs.values())))
    }
    unit_matrix = lsi_similarity_matrix(model, req_vectors, prov_vectors)
    return ScoreSurfaces(unit_matrix=unit_matrix, req_matrix=pool_to_requirements(unit_matrix))


def lda_surfaces(
    corpus: Corpus,
    fit_doc_ids: Sequence[str],
    score_doc_ids: Sequence[str],
    topics: int = 50,
    alpha: float = 0.02,
    beta: float = 0.02,
    iterations: int = 200,
    seed: int = 16,
    config: PreprocessConfig = LDA_PREPROCESS,
) -> ScoreSurfaces:
    fit_units = _unit_tokens(corpus, config, fit_doc_ids)
    provs = _prov_tokens(corpus, config)
    model = fit_lda(
        list(fit_units.values()) + list(provs.values()),
        T=topics,
        alpha=alpha,
        beta=beta,
        iterations=iterations,
        seed=seed,
    )
    score_units = _unit_tokens(corpus, config, score_doc_ids)
    unit_matrix = lda_similarity_matrix(model, score_units, provs, seed=seed)
    return ScoreSurfaces(unit_matrix=unit_matrix, req_matrix=pool_to_requirements(unit_matrix))


def indicator_surfaces(
    corpus: Corpus,
    fit_doc_ids: Sequence[str],
    score_doc_ids: Sequence[str],
    config: PreprocessConfig = PreprocessConfig(),
) -> ScoreSurfaces:
    model = fit_indicator_model(corpus, fit_doc_ids, config=config)
    score_units = _unit_tokens(corpus, config, score_doc_ids)
    unit_matrix = indicator_similarity_matrix(model, score_units, corpus.codes)
    return ScoreSurfaces(unit_matrix=unit_matrix, req_matrix=pool_to_requirements(unit_matrix))


def unit_gt(corpus: Corpus, matrix: SimilarityMatrix) -> dict[str, frozenset[str]]:
    """Ground truth lifted to unit ids: each unit inherits its parent's links."""
    return {
        uid: corpus.ground_truth.codes_for(unit_parent(uid)) for uid in matrix.req_ids
    }


def evaluate_predictions(
    pred: PredictionSet,
    corpus: Corpus,
    req_ids: Sequence[str],
    match_mode: str = "superset",
    matrix: SimilarityMatrix | None = None,
) -> tuple[MetricsReport, RequirementLevelReport]:
    gt = _restrict_gt(corpus, req_ids)
    counts = confusion(pred, gt, req_ids, corpus.codes)
    report = MetricsReport(
        counts=counts,
        precision=precision(counts),
        recall=recall(counts),
        f2=f_beta(counts, beta=2.0),
    )
    doc_of = {r.id: r.doc_id for r in corpus.requirements}
    by_doc: dict[str, list[str]] = {}
    for rid in req_ids:
        by_doc.setdefault(doc_of[rid], []).append(rid)
    if len(by_doc) > 1:
        for doc_id, doc_req_ids in by_doc.items():
            doc_pred = {
                rid: pred.predictions.get(rid, frozenset()) for rid in doc_req_ids
            }
            doc_gt = _restrict_gt(corpus, doc_req_ids)
            doc_counts = confusion(doc_pred, doc_gt, doc_req_ids, corpus.codes)
            report.per_document[doc_id] = MetricsReport(
                counts=doc_counts,
                precision=precision(doc_counts),
                recall=recall(doc_counts),
                f2=f_beta(doc_counts, beta=2.0),
            )
    if matrix is not None:
        try:
            report.map = map_score(matrix, gt)
        except ValueError:
            report.map = None
        scores, labels = pooled_pairs(matrix, gt)
        try:
            report.auc = roc_auc(scores, labels, mode="sweep")
        except ValueError:
            report.auc = None
    req_report = requirement_level_report(pred, gt, req_ids, corpus.codes, match_mode)
    return report, req_report


def predict_with_strategy(
    strategy: str,
    corpus: Corpus,
    train_ids: Sequence[str],
    test_ids: Sequence[str],
    theta: float,
    dim: int,
    seed: int,
    sample_size: int,
    k: int | None,
    topics: int,
    lda_iterations: int,
) -> tuple[PredictionSet, SimilarityMatrix]:
    """Requirement-level predictions plus the pooled score matrix used."""
    if strategy in THRESHOLD_STRATEGIES:
        test_surfaces, test_req_set = hash_similarity_surfaces(
            corpus, dim, seed, doc_ids=test_ids
        )
        if strategy == "constant":
            return predict_constant(test_surfaces.req_matrix, theta), test_surfaces.req_matrix
        if strategy == "delta":
            unit_pred = predict_delta(test_surfaces.unit_matrix)
            return union_to_requirements(unit_pred), test_surfaces.req_matrix
        if strategy == "dynamic":
            train_units = requirement_units(corpus, doc_ids=train_ids)
            train_unit_ids = [uid for uid, _, _ in train_units]
            train_req_set, _, _ = embed_corpus_hash(corpus, dim, seed, doc_ids=train_ids)
            gt_units = {
                uid: corpus.ground_truth.codes_for(parent)
                for uid, parent, _ in train_units
            }
            bank = build_negative_bank(
                gt_units, train_unit_ids, corpus.codes,
                sample_size=sample_size, seed=seed,
            )
            merged = EmbeddingSet(
                dim=dim,
                provider_tag=test_req_set.provider_tag,
                vectors={**train_req_set.vectors, **test_req_set.vectors},
            )
            unit_pred = predict_dynamic(merged, test_surfaces.unit_matrix, bank)
            return union_to_requirements(unit_pred), test_surfaces.req_matrix
        # tuned
        train_surfaces, _ = hash_similarity_surfaces(corpus, dim, seed, doc_ids=train_ids)
        train_gt = _restrict_gt(corpus, list(train_surfaces.req_matrix.req_ids))
        curve = tune_threshold(train_surfaces.req_matrix, train_gt)
        return (
            predict_constant(test_surfaces.req_matrix, curve.best_theta),
            test_surfaces.req_matrix,
        )

    if strategy not in BASELINE_STRATEGIES:
        raise PipelineError(f"unknown strategy '{strategy}'")

    if strategy == "tfidf":
        train_surfaces = tfidf_surfaces(corpus, train_ids, train_ids)
        test_surfaces = tfidf_surfaces(corpus, train_ids, test_ids)
    elif strategy == "lsi":
        train_surfaces = lsi_surfaces(corpus, train_ids, train_ids, k=k)
        test_surfaces = lsi_surfaces(corpus, train_ids, test_ids, k=k)
    elif strategy == "lda":
        train_surfaces = lda_surfaces(
            corpus, train_ids, train_ids, topics=topics, seed=seed,
            iterations=lda_iterations,
        )
        test_surfaces = lda_surfaces(
            corpus, train_ids, test_ids, topics=topics, seed=seed,
            iterations=lda_iterations,
        )
    else:
        train_surfaces = indicator_surfaces(corpus, train_ids, train_ids)
        test_surfaces = indicator_surfaces(corpus, train_ids, test_ids)
    train_gt = _restrict_gt(corpus, list(train_surfaces.req_matrix.req_ids))
    curve = tune_threshold(train_surfaces.req_matrix, train_gt)
    pred = predict_constant(test_surfaces.req_matrix, curve.best_theta)
    pred.strategy_tag = f"{strategy}:theta={curve.best_theta}"
    return pred, test_surfaces.req_matrix


def run_loo(
    corpus: Corpus,
    strategies: Sequence[str],
    excluded_doc_ids: Sequence[str] = (),
    theta: float = 0.5,
    dim: int = 256,
    seed: int = 16,
    sample_size: int = 10,
    k: int | None = None,
    topics: int = 50,
    lda_iterations: int = 200,
    match_mode: str = "superset",
) -> dict[str, dict]:
    """Leave-one-out evaluation of the selected strategies over a corpus.

    Returns a JSON-ready structure: per strategy, per test document, the
    link-level counts and metrics plus the requirement-level report, along
    with pooled counts and averages (undefined F2 counts as 0 in averages).
    """
    from .evaluation import loo_splits, mean_undefined_as_zero

    splits = loo_splits(corpus, excluded_doc_ids)
    out: dict[str, dict] = {}
    for strategy in strategies:
        per_split: dict[str, dict] = {}
        pooled = {"tp": 0, "fp": 0, "fn": 0, "tn": 0}
        f2_values: list[float | None] = []
        for train_ids, test_id in splits:
            test_req_ids = _doc_req_ids(corpus, [test_id])
            pred, req_matrix = predict_with_strategy(
                strategy, corpus, train_ids, [test_id], theta, dim, seed,
                sample_size, k, topics, lda_iterations,
            )
            report, req_report = evaluate_predictions(
                pred, corpus, test_req_ids, match_mode=match_mode, matrix=req_matrix
            )
            for name in ("tp", "fp", "fn", "tn"):
                pooled[name] += getattr(report.counts, name)
            f2_values.append(report.f2)
            per_split[test_id] = {
                "counts": {
                    "tp": report.counts.tp,
                    "fp": report.counts.fp,
                    "fn": report.counts.fn,
                    "tn": report.counts.tn,
                },
                "precision": report.precision,
                "recall": report.recall,
                "f2": report.f2,
                "map": report.map,
                "auc": report.auc,
                "requirement_level": {
                    "exact_match": req_report.exact_match,
                    "partial_match": req_report.partial_match,
                    "incorrect": req_report.incorrect,
                    "success_rate": req_report.success_rate,
                    "macro_recall": req_report.macro_recall,
                    "cost": req_report.cost,
                },
            }
        counts = ConfusionCounts(**pooled)
        out[strategy] = {
            "per_document": per_split,
            "pooled": {
                "counts": pooled,
                "precision": precision(counts),
                "recall": recall(counts),
                "f2": f_beta(counts, beta=2.0),
            },
            "mean_f2_undefined_as_zero": mean_undefined_as_zero(f2_values),
        }
    return out
