"""Metric battery and experiment harnesses.

Link-level metrics (precision, recall, F-beta, MAP, micro ROC-AUC),
requirement-level metrics (exact/partial match, success rate, macro recall,
analyst cost), Fisher's exact test, leave-one-out splits, and the zero-shot
model ranking harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Corpus, TraceLinkSet
from .embeddings import EmbeddingSet, SimilarityMatrix, build_similarity_matrix


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise EvaluationError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricsReport:
    counts: ConfusionCounts
    precision: float | None
    recall: float | None
    f2: float | None
    map: float | None = None
    auc: float | None = None
    per_document: dict[str, "MetricsReport"] = field(default_factory=dict)


@dataclass
class RequirementLevelReport:
    exact_match: int
    partial_match: int
    incorrect: int
    success_rate: float
    macro_recall: float
    cost: float

    def __post_init__(self):
        n = self.exact_match + self.partial_match + self.incorrect
        if n > 0:
            expected = (self.exact_match + self.partial_match) / n
            if abs(self.success_rate - expected) > 1e-9:
                raise EvaluationError("success_rate inconsistent with match counts")


@dataclass(frozen=True)
class ContingencyTable2x2:
    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            if getattr(self, name) < 0:
                raise EvaluationError(f"{name} must be non-negative")


def _as_mapping(pred) -> Mapping[str, frozenset[str]]:
    if hasattr(pred, "predictions"):
        return pred.predictions
    return pred


def _gt_mapping(gt) -> Mapping[str, frozenset[str]]:
    if isinstance(gt, TraceLinkSet):
        return gt.links
    return gt


def confusion(
    pred,
    gt,
    req_ids: Sequence[str],
    prov_codes: Sequence[str],
) -> ConfusionCounts:
    """Set-algebra counts over the full requirement x provision universe."""
    predictions = _as_mapping(pred)
    truth = _gt_mapping(gt)
    req_set = set(req_ids)
    code_set = set(prov_codes)
    for rid in predictions:
        if rid not in req_set:
            raise EvaluationError(f"prediction for unknown requirement id '{rid}'")
    for rid in truth:
        if rid not in req_set:
            raise EvaluationError(f"ground truth for unknown requirement id '{rid}'")
    tp = fp = fn = tn = 0
    for rid in req_ids:
        predicted = set(predictions.get(rid, frozenset()))
        actual = set(truth.get(rid, frozenset()))
        if not predicted <= code_set:
            raise EvaluationError(
                f"prediction for '{rid}' contains codes outside the universe: "
                f"{sorted(predicted - code_set)}"
            )
        for code in prov_codes:
            is_pred = code in predicted
            is_true = code in actual
            if is_pred and is_true:
                tp += 1
            elif is_pred:
                fp += 1
            elif is_true:
                fn += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def precision(counts: ConfusionCounts) -> float | None:
    denom = counts.tp + counts.fp
    return None if denom == 0 else counts.tp / denom


def recall(counts: ConfusionCounts) -> float | None:
    denom = counts.tp + counts.fn
    return None if denom == 0 else counts.tp / denom


def f_beta(counts: ConfusionCounts, beta: float = 2.0) -> float | None:
    """F-beta from confusion counts.

    Undefined (None) when precision and recall are each zero or undefined,
    which is exactly the TP == 0 case. Averages over documents treat
    undefined scores as 0.
    """
    if beta <= 0:
        raise EvaluationError("beta must be positive")
    p = precision(counts)
    r = recall(counts)
    if not p and not r:
        return None
    p = p or 0.0
    r = r or 0.0
    b2 = beta * beta
    return (1 + b2) * p * r / (b2 * p + r)


def mean_undefined_as_zero(values: Iterable[float | None]) -> float:
    vals = [0.0 if v is None else float(v) for v in values]
    if not vals:
        raise EvaluationError("cannot average an empty sequence")
    return sum(vals) / len(vals)


def average_precision(ranked_relevant: Sequence[bool]) -> float:
    hits = 0
    total = 0.0
    for rank, rel in enumerate(ranked_relevant, start=1):
        if rel:
            hits += 1
            total += hits / rank
    if hits == 0:
        return 0.0
    return total / hits


def map_score(matrix: SimilarityMatrix, gt) -> float:
    """Mean average precision over requirements with at least one true link.

    Provisions are ranked per requirement by descending score, ties broken
    lexicographically by code.
    """
    truth = _gt_mapping(gt)
    ap_values: list[float] = []
    for i, rid in enumerate(matrix.req_ids):
        relevant = set(truth.get(rid, frozenset()))
        if not relevant:
            continue
        order = sorted(
            range(len(matrix.prov_codes)),
            key=lambda j: (-matrix.scores[i, j], matrix.prov_codes[j]),
        )
        ap_values.append(
            average_precision([matrix.prov_codes[j] in relevant for j in order])
        )
    if not ap_values:
        raise EvaluationError("no requirement has any ground-truth link")
    return sum(ap_values) / len(ap_values)


def _rank_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores), dtype=float)
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def sweep_points(lo: float, hi: float, step: float) -> list[float]:
    count = int(round((hi - lo) / step)) + 1
    return [lo + i * step for i in range(count)]


def roc_auc(
    scores: Sequence[float],
    labels: Sequence[int],
    mode: str = "full",
    lo: float = 0.1,
    hi: float = 0.9,
    step: float = 0.05,
) -> float:
    """Micro-averaged ROC-AUC over pooled requirement-provision pairs.

    ``full`` is the rank-based estimator with average ranks for ties;
    ``sweep`` evaluates strict-exceedance classification at evenly spaced
    thresholds and takes the trapezoidal area over the (FPR, TPR) points,
    anchored at (0, 0) and (1, 1).
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    if s.shape != y.shape or s.ndim != 1:
        raise EvaluationError("scores and labels must be equal-length 1-d sequences")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("ROC-AUC requires both classes present")
    if mode == "full":
        return _rank_auc(s, y)
    if mode != "sweep":
        raise EvaluationError(f"unknown mode '{mode}'")
    points = [(0.0, 0.0), (1.0, 1.0)]
    for theta in sweep_points(lo, hi, step):
        predicted = s > theta
        tp = int(np.sum(predicted & (y == 1)))
        fp = int(np.sum(predicted & (y == 0)))
        points.append((fp / n_neg, tp / n_pos))
    points.sort()
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def roc_curve_points(
    scores: Sequence[float],
    labels: Sequence[int],
    lo: float = 0.1,
    hi: float = 0.9,
    step: float = 0.05,
) -> list[tuple[float, float]]:
    """(FPR, TPR) points of the threshold sweep, anchors included, sorted."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("ROC curve requires both classes present")
    points = {(0.0, 0.0), (1.0, 1.0)}
    for theta in sweep_points(lo, hi, step):
        predicted = s > theta
        tp = int(np.sum(predicted & (y == 1)))
        fp = int(np.sum(predicted & (y == 0)))
        points.add((fp / n_neg, tp / n_pos))
    return sorted(points)


def requirement_level_report(
    pred,
    gt,
    req_ids: Sequence[str],
    prov_codes: Sequence[str],
    match_mode: str = "superset",
) -> RequirementLevelReport:
    """Per-requirement match counting plus macro recall and analyst cost.

    Exact match: predicted set equals the ground truth (both empty counts
    as exact). Partial match in ``superset`` mode: prediction strictly
    contains a non-empty ground truth; in ``overlap`` mode: non-empty
    intersection without being exact. Per-requirement recall is 1 when
    both sets are empty and 0 when only the prediction is non-empty; cost
    is the predicted fraction of the catalog, averaged over requirements.
    """
    if match_mode not in ("superset", "overlap"):
        raise EvaluationError(f"unknown match_mode '{match_mode}'")
    predictions = _as_mapping(pred)
    truth = _gt_mapping(gt)
    n_req = len(req_ids)
    if n_req == 0:
        raise EvaluationError("empty requirement universe")
    n_prov = len(prov_codes)
    exact = partial = incorrect = 0
    recall_sum = 0.0
    cost_sum = 0.0
    for rid in req_ids:
        predicted = set(predictions.get(rid, frozenset()))
        actual = set(truth.get(rid, frozenset()))
        if predicted == actual:
            exact += 1
        elif match_mode == "superset" and actual and predicted > actual:
            partial += 1
        elif match_mode == "overlap" and predicted & actual:
            partial += 1
        else:
            incorrect += 1
        if actual:
            recall_sum += len(predicted & actual) / len(actual)
        elif not predicted:
            recall_sum += 1.0
        cost_sum += len(predicted) / n_prov
    return RequirementLevelReport(
        exact_match=exact,
        partial_match=partial,
        incorrect=incorrect,
        success_rate=(exact + partial) / n_req,
        macro_recall=recall_sum / n_req,
        cost=cost_sum / n_req,
    )


def _log_comb(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def fisher_exact(table: ContingencyTable2x2) -> float:
    """Two-tailed Fisher's exact test p-value via log-factorial arithmetic.

    Sums hypergeometric probabilities, over all tables with the observed
    margins, that do not exceed the observed table's probability (with a
    1e-12 relative slack for float comparison).
    """
    a, b, c, d = table.a, table.b, table.c, table.d
    row1 = a + b
    col1 = a + c
    n = a + b + c + d
    if n == 0:
        return 1.0
    log_denominator = _log_comb(n, row1)

    def log_pmf(x: int) -> float:
        return _log_comb(col1, x) + _log_comb(n - col1, row1 - x) - log_denominator

    lo = max(0, row1 + col1 - n)
    hi = min(row1, col1)
    observed = log_pmf(a)
    total = 0.0
    slack = math.log1p(1e-12)
    for x in range(lo, hi + 1):
        lp = log_pmf(x)
        if lp <= observed + slack:
            total += math.exp(lp)
    return min(1.0, total)


def loo_splits(
    corpus: Corpus, excluded_doc_ids: Iterable[str] = ()
) -> list[tuple[tuple[str, ...], str]]:
    """One (train ids, test id) split per non-excluded document."""
    excluded = set(excluded_doc_ids)
    known = [d.id for d in corpus.documents]
    unknown = sorted(excluded - set(known))
    if unknown:
        raise EvaluationError(f"unknown excluded document ids: {unknown}")
    usable = [doc_id for doc_id in known if doc_id not in excluded]
    if len(usable) < 2:
        raise EvaluationError(
            f"leave-one-out needs at least 2 documents, have {len(usable)}"
        )
    return [
        (tuple(d for d in usable if d != test_id), test_id) for test_id in usable
    ]


def pooled_pairs(
    matrix: SimilarityMatrix, gt
) -> tuple[np.ndarray, np.ndarray]:
    """Flatten a similarity matrix into pooled (scores, labels) arrays."""
    truth = _gt_mapping(gt)
    labels = np.zeros(matrix.scores.shape, dtype=int)
    for i, rid in enumerate(matrix.req_ids):
        linked = truth.get(rid, frozenset())
        for j, code in enumerate(matrix.prov_codes):
            if code in linked:
                labels[i, j] = 1
    return matrix.scores.ravel(), labels.ravel()


def rank_models(
    embedding_sets: Sequence[tuple[str, tuple[EmbeddingSet, EmbeddingSet]]],
    corpus: Corpus,
    lo: float = 0.1,
    hi: float = 0.9,
    step: float = 0.05,
) -> list[tuple[str, float]]:
    """Rank candidate embedding models by zero-shot sweep-mode micro AUC.

    Each entry supplies a (requirements, provisions) embedding pair that
    must cover the corpus ids; ranking is by descending AUC with ties
    broken by tag.
    """
    if not embedding_sets:
        raise EvaluationError("no models to rank")
    req_ids = list(corpus.requirement_ids)
    codes = list(corpus.codes)
    results: list[tuple[str, float]] = []
    for tag, (req_set, prov_set) in embedding_sets:
        missing = [i for i in req_ids if i not in req_set.vectors]
        missing += [c for c in codes if c not in prov_set.vectors]
        if missing:
            raise EvaluationError(f"model '{tag}' is missing ids: {missing}")
        matrix = build_similarity_matrix(
            req_set.restrict(req_ids), prov_set.restrict(codes)
        )
        scores, labels = pooled_pairs(matrix, corpus.ground_truth)
        results.append(
            (tag, roc_auc(scores, labels, mode="sweep", lo=lo, hi=hi, step=step))
        )
    results.sort(key=lambda item: (-item[1], item[0]))
    return results
