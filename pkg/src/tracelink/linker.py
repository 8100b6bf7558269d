"""Threshold strategies that turn a similarity matrix into trace-link predictions.

Four strategies: a constant threshold (default 0.5, strict exceedance), a
dynamic per-pair threshold from negative examples, the maximum-delta cutoff
over each requirement's sorted similarities, and a threshold tuned on a
training split by exhaustive F2 grid search.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import TraceLinkSet
from .embeddings import EmbeddingSet, SimilarityMatrix, cosine
from .evaluation import ConfusionCounts, f_beta

TUNE_GRID = tuple(i / 100.0 for i in range(1, 100))


class LinkerError(ValueError):
    pass


@dataclass
class PredictionSet:
    predictions: dict[str, frozenset[str]]
    strategy_tag: str
    thresholds_used: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, list[str]]:
        return {rid: sorted(codes) for rid, codes in sorted(self.predictions.items())}


@dataclass(frozen=True)
class NegativeExampleBank:
    """Per-provision pools of requirement ids known not to trace to it."""

    per_provision: Mapping[str, tuple[str, ...]]
    sample_size: int = 10
    seed: int = 16

    def __post_init__(self):
        if self.sample_size < 1:
            raise LinkerError("sample_size must be >= 1")


@dataclass
class ThresholdCurve:
    points: list[tuple[float, float]]
    best_theta: float

    def __post_init__(self):
        thetas = [t for t, _ in self.points]
        if any(b <= a for a, b in zip(thetas, thetas[1:])):
            raise LinkerError("curve thetas must be strictly increasing")


def build_negative_bank(
    gt: TraceLinkSet | Mapping[str, frozenset[str]],
    req_ids: Sequence[str],
    prov_codes: Sequence[str],
    sample_size: int = 10,
    seed: int = 16,
) -> NegativeExampleBank:
    """Collect, per provision, every requirement that is a ground-truth negative."""
    links = gt.links if isinstance(gt, TraceLinkSet) else gt
    pools: dict[str, tuple[str, ...]] = {}
    for code in prov_codes:
        pools[code] = tuple(
            rid for rid in req_ids if code not in links.get(rid, frozenset())
        )
    return NegativeExampleBank(
        per_provision=pools, sample_size=sample_size, seed=seed
    )


def predict_constant(matrix: SimilarityMatrix, theta: float) -> PredictionSet:
    """Predict (r, c) exactly when score strictly exceeds theta."""
    if not 0.0 <= theta <= 1.0:
        raise LinkerError(f"theta must be in [0, 1], got {theta}")
    predictions: dict[str, frozenset[str]] = {}
    thresholds: dict[str, float] = {}
    for i, rid in enumerate(matrix.req_ids):
        row = matrix.scores[i]
        predictions[rid] = frozenset(
            code for j, code in enumerate(matrix.prov_codes) if row[j] > theta
        )
        thresholds[rid] = theta
    return PredictionSet(
        predictions=predictions,
        strategy_tag=f"constant:theta={theta}",
        thresholds_used=thresholds,
    )


def _code_rng(seed: int, code: str) -> np.random.Generator:
    digest = hashlib.blake2b(code.encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng([seed, int.from_bytes(digest, "big")])


def sample_negatives(bank: NegativeExampleBank, code: str) -> tuple[str, ...]:
    """Seeded sample without replacement, fixed per provision per run.

    The per-provision RNG is derived from (bank.seed, code) so the sample
    does not depend on provision iteration order.
    """
    pool = tuple(bank.per_provision.get(code, ()))
    if not pool:
        raise LinkerError(f"provision '{code}' has an empty negative pool")
    if len(pool) <= bank.sample_size:
        return pool
    rng = _code_rng(bank.seed, code)
    chosen = rng.choice(len(pool), size=bank.sample_size, replace=False)
    return tuple(pool[i] for i in sorted(chosen))


def predict_dynamic(
    req_embeddings: EmbeddingSet,
    prov_matrix: SimilarityMatrix,
    bank: NegativeExampleBank,
) -> PredictionSet:
    """Per-pair threshold: mean cosine between the requirement and sampled negatives.

    (r, c) is predicted when its similarity strictly exceeds the average
    cosine of r against the provision's sampled negative requirements.
    Thresholds vary per pair, so no single per-requirement value is recorded.
    """
    missing = [c for c in prov_matrix.prov_codes if c not in bank.per_provision]
    if missing:
        raise LinkerError(f"negative bank does not cover provisions: {missing}")
    samples: dict[str, tuple[str, ...]] = {
        code: sample_negatives(bank, code) for code in sorted(prov_matrix.prov_codes)
    }
    for code, sample in samples.items():
        absent = [rid for rid in sample if rid not in req_embeddings.vectors]
        if absent:
            raise LinkerError(
                f"sampled negatives for '{code}' lack embeddings: {absent}"
            )
    predictions: dict[str, frozenset[str]] = {}
    for i, rid in enumerate(prov_matrix.req_ids):
        if rid not in req_embeddings.vectors:
            raise LinkerError(f"requirement '{rid}' lacks an embedding")
        req_vec = req_embeddings.vectors[rid]
        chosen: set[str] = set()
        for j, code in enumerate(prov_matrix.prov_codes):
            negatives = samples[code]
            theta = sum(
                cosine(req_vec, req_embeddings.vectors[neg]) for neg in negatives
            ) / len(negatives)
            if prov_matrix.scores[i, j] > theta:
                chosen.add(code)
        predictions[rid] = frozenset(chosen)
    return PredictionSet(
        predictions=predictions,
        strategy_tag=f"dynamic:sample={bank.sample_size}:seed={bank.seed}",
    )


def predict_delta(matrix: SimilarityMatrix) -> PredictionSet:
    """Cut each requirement's ranking at the largest gap between consecutive scores.

    Scores are sorted descending; theta is the lower value of the
    consecutive pair with the largest gap, and every provision scoring
    strictly above theta is predicted. Gap ties take the gap nearest the
    top of the ranking (fewer predictions). When all scores are equal the
    gap rule is vacuous and the single top provision is predicted, so
    every requirement always receives at least one prediction.
    """
    m = len(matrix.prov_codes)
    if m < 2:
        raise LinkerError("delta strategy needs at least 2 provisions")
    predictions: dict[str, frozenset[str]] = {}
    thresholds: dict[str, float] = {}
    for i, rid in enumerate(matrix.req_ids):
        row = matrix.scores[i]
        order = sorted(range(m), key=lambda j: (-row[j], matrix.prov_codes[j]))
        sorted_scores = [row[j] for j in order]
        gaps = [
            sorted_scores[k] - sorted_scores[k + 1] for k in range(m - 1)
        ]
        best_gap = max(gaps)
        if best_gap == 0.0:
            predictions[rid] = frozenset({matrix.prov_codes[order[0]]})
            thresholds[rid] = sorted_scores[0]
            continue
        cut = gaps.index(best_gap)
        theta = sorted_scores[cut + 1]
        predictions[rid] = frozenset(
            code for j, code in enumerate(matrix.prov_codes) if row[j] > theta
        )
        thresholds[rid] = theta
    return PredictionSet(
        predictions=predictions,
        strategy_tag="delta",
        thresholds_used=thresholds,
    )


def _gt_label_grid(matrix: SimilarityMatrix, gt) -> np.ndarray:
    links = gt.links if isinstance(gt, TraceLinkSet) else gt
    labels = np.zeros(matrix.scores.shape, dtype=bool)
    for i, rid in enumerate(matrix.req_ids):
        linked = links.get(rid, frozenset())
        for j, code in enumerate(matrix.prov_codes):
            if code in linked:
                labels[i, j] = True
    return labels


def _f2_at(scores: np.ndarray, labels: np.ndarray, theta: float) -> float:
    predicted = scores > theta
    tp = int(np.sum(predicted & labels))
    fp = int(np.sum(predicted & ~labels))
    fn = int(np.sum(~predicted & labels))
    tn = int(labels.size) - tp - fp - fn
    value = f_beta(ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn), beta=2.0)
    return 0.0 if value is None else value


def tune_threshold(
    matrix_train: SimilarityMatrix, gt_train
) -> ThresholdCurve:
    """Grid-search theta in {0.01, ..., 0.99} for the best training F2.

    Ties are broken by the smallest theta; undefined F2 counts as 0 on
    the curve.
    """
    labels = _gt_label_grid(matrix_train, gt_train)
    if not labels.any():
        raise LinkerError("training ground truth has no positive links")
    points: list[tuple[float, float]] = []
    best_theta = TUNE_GRID[0]
    best_f2 = -1.0
    for theta in TUNE_GRID:
        value = _f2_at(matrix_train.scores, labels, theta)
        points.append((theta, value))
        if value > best_f2:
            best_f2 = value
            best_theta = theta
    return ThresholdCurve(points=points, best_theta=best_theta)


def sweep_thresholds(
    matrix: SimilarityMatrix, gt, n_points: int
) -> ThresholdCurve:
    """F2 at n_points thresholds evenly spaced over [0, 1]."""
    if n_points < 2:
        raise LinkerError("n_points must be >= 2")
    labels = _gt_label_grid(matrix, gt)
    points: list[tuple[float, float]] = []
    best_theta = 0.0
    best_f2 = -1.0
    for theta in np.linspace(0.0, 1.0, n_points):
        theta = float(theta)
        value = _f2_at(matrix.scores, labels, theta)
        points.append((theta, value))
        if value > best_f2:
            best_f2 = value
            best_theta = theta
    return ThresholdCurve(points=points, best_theta=best_theta)


def union_to_requirements(pred: PredictionSet) -> PredictionSet:
    """Union sentence-unit predictions back to their parent requirements.

    Per-requirement thresholds survive only where the requirement was a
    single unit; a multi-sentence union has no single meaningful threshold.
    """
    from .corpus import unit_parent

    merged: dict[str, set[str]] = {}
    unit_count: dict[str, int] = {}
    for unit_id, codes in pred.predictions.items():
        parent = unit_parent(unit_id)
        merged.setdefault(parent, set()).update(codes)
        unit_count[parent] = unit_count.get(parent, 0) + 1
    thresholds = {
        unit_parent(uid): theta
        for uid, theta in pred.thresholds_used.items()
        if unit_count.get(unit_parent(uid)) == 1
    }
    return PredictionSet(
        predictions={rid: frozenset(codes) for rid, codes in merged.items()},
        strategy_tag=pred.strategy_tag,
        thresholds_used=thresholds,
    )
