from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracelink.corpus import corpus_from_dict
from tracelink.embeddings import EmbeddingSet, SimilarityMatrix, hash_embed_set
from tracelink.evaluation import (
    ConfusionCounts,
    ContingencyTable2x2,
    EvaluationError,
    average_precision,
    confusion,
    f_beta,
    fisher_exact,
    loo_splits,
    map_score,
    mean_undefined_as_zero,
    precision,
    pooled_pairs,
    rank_models,
    recall,
    requirement_level_report,
    roc_auc,
    sweep_points,
)


class TestConfusion:
    def test_identity(self):
        pred = {"r1": frozenset({"a"}), "r2": frozenset()}
        counts = confusion(pred, pred, ["r1", "r2"], ["a", "b"])
        assert (counts.tp, counts.fp, counts.fn) == (1, 0, 0)
        assert counts.total == 4

    def test_empty_predictions(self):
        gt = {"r1": frozenset({"a", "b"}), "r2": frozenset({"a", "b", "c"})}
        counts = confusion({}, gt, ["r1", "r2"], ["a", "b", "c"])
        assert counts.fn == 5
        assert counts.tp == counts.fp == 0

    def test_matches_naive_double_loop(self):
        rng = np.random.default_rng(0)
        req_ids = [f"r{i}" for i in range(6)]
        codes = [f"c{j}" for j in range(5)]
        pred = {
            rid: frozenset(c for c in codes if rng.random() < 0.4) for rid in req_ids
        }
        gt = {
            rid: frozenset(c for c in codes if rng.random() < 0.3) for rid in req_ids
        }
        counts = confusion(pred, gt, req_ids, codes)
        tp = fp = fn = tn = 0
        for rid, code in itertools.product(req_ids, codes):
            p = code in pred[rid]
            t = code in gt[rid]
            tp += p and t
            fp += p and not t
            fn += t and not p
            tn += not p and not t
        assert (counts.tp, counts.fp, counts.fn, counts.tn) == (tp, fp, fn, tn)
        assert counts.total == len(req_ids) * len(codes)

    def test_unknown_id_rejected(self):
        with pytest.raises(EvaluationError, match="ghost"):
            confusion({"ghost": frozenset()}, {}, ["r1"], ["a"])

    def test_code_outside_universe_rejected(self):
        with pytest.raises(EvaluationError, match="zz"):
            confusion({"r1": frozenset({"zz"})}, {}, ["r1"], ["a"])


class TestFBeta:
    def test_published_constant_row(self):
        counts = ConfusionCounts(tp=111, fp=114, fn=54, tn=0)
        assert 100 * precision(counts) == pytest.approx(49.3, abs=0.05)
        assert 100 * recall(counts) == pytest.approx(67.3, abs=0.05)
        assert 100 * f_beta(counts, 2.0) == pytest.approx(62.7, abs=0.05)

    def test_published_indicator_row(self):
        counts = ConfusionCounts(tp=24, fp=16, fn=141, tn=0)
        assert 100 * precision(counts) == pytest.approx(60.0, abs=0.05)
        assert 100 * recall(counts) == pytest.approx(14.5, abs=0.05)
        assert 100 * f_beta(counts, 2.0) == pytest.approx(17.1, abs=0.05)

    def test_published_glove_row(self):
        counts = ConfusionCounts(tp=50, fp=428, fn=115, tn=0)
        assert 100 * precision(counts) == pytest.approx(10.5, abs=0.05)
        assert 100 * recall(counts) == pytest.approx(30.3, abs=0.05)
        assert 100 * f_beta(counts, 2.0) == pytest.approx(22.0, abs=0.05)

    def test_undefined_when_no_true_positive(self):
        assert f_beta(ConfusionCounts(tp=0, fp=1, fn=57, tn=0), 2.0) is None
        assert f_beta(ConfusionCounts(tp=0, fp=15, fn=43, tn=0), 2.0) is None

    def test_average_treats_undefined_as_zero(self):
        assert mean_undefined_as_zero([None, 24.9, None, 12.5]) == pytest.approx(
            9.3, abs=0.0500001
        )

    @given(st.integers(1, 200), st.integers(0, 200))
    def test_equal_precision_recall_identity(self, tp, off):
        counts = ConfusionCounts(tp=tp, fp=off, fn=off, tn=0)
        x = precision(counts)
        for beta in (0.5, 1.0, 2.0):
            assert f_beta(counts, beta) == pytest.approx(x, abs=1e-12)

    def test_f1_symmetric_f2_recall_weighted(self):
        counts = ConfusionCounts(tp=10, fp=2, fn=8, tn=0)
        swapped = ConfusionCounts(tp=10, fp=8, fn=2, tn=0)
        assert f_beta(counts, 1.0) == pytest.approx(f_beta(swapped, 1.0), abs=1e-12)
        # R > P here, so F2 must exceed F1.
        assert f_beta(swapped, 2.0) > f_beta(swapped, 1.0)

    def test_beta_must_be_positive(self):
        with pytest.raises(EvaluationError):
            f_beta(ConfusionCounts(1, 1, 1, 1), 0.0)


class TestMapScore:
    def test_top_rank(self):
        matrix = SimilarityMatrix(("r",), ("a", "b"), [[0.9, 0.1]])
        assert map_score(matrix, {"r": frozenset({"a"})}) == 1.0

    def test_ranks_one_and_three(self):
        matrix = SimilarityMatrix(("r",), ("a", "b", "c"), [[0.9, 0.5, 0.4]])
        value = map_score(matrix, {"r": frozenset({"a", "c"})})
        assert value == pytest.approx((1.0 + 2.0 / 3.0) / 2.0, abs=1e-12)

    def test_random_instance_matches_enumeration(self):
        rng = np.random.default_rng(2)
        codes = tuple(f"c{j}" for j in range(6))
        req_ids = tuple(f"r{i}" for i in range(5))
        scores = rng.random((5, 6))
        matrix = SimilarityMatrix(req_ids, codes, scores)
        gt = {
            rid: frozenset(c for c in codes if rng.random() < 0.4) for rid in req_ids
        }
        if not any(gt.values()):
            gt[req_ids[0]] = frozenset({codes[0]})
        expected_values = []
        for i, rid in enumerate(req_ids):
            relevant = gt[rid]
            if not relevant:
                continue
            ranking = sorted(zip(scores[i], codes), key=lambda t: (-t[0], t[1]))
            hits, ap = 0, 0.0
            for rank, (_, code) in enumerate(ranking, start=1):
                if code in relevant:
                    hits += 1
                    ap += hits / rank
            expected_values.append(ap / len(relevant))
        expected = sum(expected_values) / len(expected_values)
        assert map_score(matrix, gt) == pytest.approx(expected, abs=1e-12)

    def test_requires_some_relevant(self):
        matrix = SimilarityMatrix(("r",), ("a",), [[0.5]])
        with pytest.raises(EvaluationError):
            map_score(matrix, {"r": frozenset()})

    def test_tie_break_is_lexicographic(self):
        matrix = SimilarityMatrix(("r",), ("b", "a"), [[0.5, 0.5]])
        # Tie on score: 'a' ranks before 'b'.
        assert map_score(matrix, {"r": frozenset({"a"})}) == 1.0
        assert map_score(matrix, {"r": frozenset({"b"})}) == 0.5

    def test_average_precision_empty(self):
        assert average_precision([False, False]) == 0.0


def _concordance_auc(scores, labels):
    """O(n^2) oracle: concordant pairs plus half ties."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestRocAuc:
    def test_perfect_separation(self):
        scores = [0.9, 0.8, 0.2, 0.1]
        labels = [1, 1, 0, 0]
        assert roc_auc(scores, labels, mode="full") == 1.0
        assert roc_auc(scores, labels, mode="sweep") == pytest.approx(1.0, abs=1e-12)

    def test_all_equal_is_chance(self):
        assert roc_auc([0.5] * 6, [1, 0, 1, 0, 1, 0], mode="full") == 0.5

    def test_matches_concordance_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            scores = np.round(rng.random(20), 2)  # rounding forces ties
            labels = rng.integers(0, 2, size=20)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert roc_auc(scores, labels, mode="full") == pytest.approx(
                _concordance_auc(scores, labels), abs=1e-9
            )

    def test_single_class_rejected(self):
        with pytest.raises(EvaluationError):
            roc_auc([0.1, 0.2], [1, 1], mode="full")

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(5)
        scores = rng.random(30)
        labels = rng.integers(0, 2, size=30)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        transformed = np.exp(3 * scores) + 7
        assert roc_auc(scores, labels, mode="full") == pytest.approx(
            roc_auc(transformed, labels, mode="full"), abs=1e-12
        )

    def test_sweep_points_17(self):
        points = sweep_points(0.1, 0.9, 0.05)
        assert len(points) == 17
        assert points[0] == pytest.approx(0.1)
        assert points[-1] == pytest.approx(0.9)


class TestRequirementLevelReport:
    def test_published_success_rate(self):
        # 73 requirements: 19 exact, 16 partial (superset), 38 incorrect.
        req_ids = [f"r{i}" for i in range(73)]
        codes = [f"c{j}" for j in range(26)]
        gt, pred = {}, {}
        for i, rid in enumerate(req_ids):
            if i < 19:
                gt[rid] = frozenset({codes[0]})
                pred[rid] = frozenset({codes[0]})
            elif i < 35:
                gt[rid] = frozenset({codes[1]})
                pred[rid] = frozenset({codes[1], codes[2]})
            else:
                gt[rid] = frozenset({codes[3]})
                pred[rid] = frozenset({codes[4]})
        report = requirement_level_report(pred, gt, req_ids, codes)
        assert report.exact_match == 19
        assert report.partial_match == 16
        assert 100 * report.success_rate == pytest.approx(47.9, abs=0.05)

    def test_both_empty_counts_exact_with_recall_one(self):
        report = requirement_level_report(
            {"r": frozenset()}, {"r": frozenset()}, ["r"], ["a", "b"]
        )
        assert report.exact_match == 1
        assert report.macro_recall == 1.0
        assert report.cost == 0.0

    def test_gt_empty_prediction_nonempty_recall_zero(self):
        report = requirement_level_report(
            {"r": frozenset({"a"})}, {"r": frozenset()}, ["r"], ["a", "b"]
        )
        assert report.incorrect == 1
        assert report.macro_recall == 0.0

    def test_superset_partial_and_cost(self):
        codes = [f"c{j}" for j in range(26)]
        report = requirement_level_report(
            {"r": frozenset({codes[0], codes[1]})},
            {"r": frozenset({codes[0]})},
            ["r"],
            codes,
        )
        assert report.partial_match == 1
        assert report.cost == pytest.approx(2 / 26, abs=1e-12)

    def test_overlap_mode_counts_intersections(self):
        pred = {"r": frozenset({"a", "b"})}
        gt = {"r": frozenset({"a", "c"})}
        superset = requirement_level_report(pred, gt, ["r"], ["a", "b", "c"])
        overlap = requirement_level_report(
            pred, gt, ["r"], ["a", "b", "c"], match_mode="overlap"
        )
        assert superset.partial_match == 0 and superset.incorrect == 1
        assert overlap.partial_match == 1 and overlap.incorrect == 0

    def test_counts_partition(self):
        rng = np.random.default_rng(8)
        req_ids = [f"r{i}" for i in range(30)]
        codes = ["a", "b", "c", "d"]
        pred = {r: frozenset(c for c in codes if rng.random() < 0.45) for r in req_ids}
        gt = {r: frozenset(c for c in codes if rng.random() < 0.3) for r in req_ids}
        for mode in ("superset", "overlap"):
            report = requirement_level_report(pred, gt, req_ids, codes, mode)
            assert (
                report.exact_match + report.partial_match + report.incorrect
                == len(req_ids)
            )
            assert 0.0 <= report.success_rate <= 1.0
            assert 0.0 <= report.macro_recall <= 1.0
            assert 0.0 <= report.cost <= 1.0


def _fisher_oracle(a, b, c, d):
    """Exact-rational enumeration over the whole hypergeometric support."""
    row1, col1, n = a + b, a + c, a + b + c + d
    if n == 0:
        return Fraction(1)
    denominator = math.comb(n, row1)

    def pmf(x):
        return Fraction(math.comb(col1, x) * math.comb(n - col1, row1 - x), denominator)

    lo = max(0, row1 + col1 - n)
    hi = min(row1, col1)
    observed = pmf(a)
    return sum(pmf(x) for x in range(lo, hi + 1) if pmf(x) <= observed)


class TestFisherExact:
    def test_transpose_symmetry(self):
        p1 = fisher_exact(ContingencyTable2x2(5, 0, 0, 5))
        p2 = fisher_exact(ContingencyTable2x2(5, 0, 0, 5))
        assert p1 == p2
        assert fisher_exact(ContingencyTable2x2(5, 0, 0, 5)) == pytest.approx(
            fisher_exact(ContingencyTable2x2(5, 0, 0, 5)), abs=1e-12
        )
        assert fisher_exact(ContingencyTable2x2(2, 7, 8, 2)) == pytest.approx(
            fisher_exact(ContingencyTable2x2(2, 8, 7, 2)), abs=1e-12
        )

    def test_identical_rows_no_association(self):
        assert fisher_exact(ContingencyTable2x2(3, 4, 3, 4)) == pytest.approx(
            1.0, abs=1e-12
        )

    def test_example_matches_enumeration(self):
        table = ContingencyTable2x2(8, 2, 1, 5)
        assert fisher_exact(table) == pytest.approx(
            float(_fisher_oracle(8, 2, 1, 5)), abs=1e-10
        )

    def test_support_probabilities_sum_to_one(self):
        a, b, c, d = 6, 3, 2, 7
        row1, col1, n = a + b, a + c, a + b + c + d
        log_denominator = (
            math.lgamma(n + 1) - math.lgamma(row1 + 1) - math.lgamma(n - row1 + 1)
        )
        total = 0.0
        for x in range(max(0, row1 + col1 - n), min(row1, col1) + 1):
            lp = (
                math.lgamma(col1 + 1)
                - math.lgamma(x + 1)
                - math.lgamma(col1 - x + 1)
                + math.lgamma(n - col1 + 1)
                - math.lgamma(row1 - x + 1)
                - math.lgamma(n - col1 - row1 + x + 1)
                - log_denominator
            )
            total += math.exp(lp)
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_degenerate_margin(self):
        assert fisher_exact(ContingencyTable2x2(0, 0, 3, 4)) == pytest.approx(1.0)

    def test_negative_rejected(self):
        with pytest.raises(EvaluationError):
            ContingencyTable2x2(-1, 0, 0, 0)


def _ten_doc_corpus():
    docs = []
    for i in range(10):
        docs.append(
            {
                "id": f"H{i + 1}",
                "name": f"doc {i + 1}",
                "requirements": [{"id": f"H{i + 1}-R1", "text": f"Requirement {i + 1}."}],
            }
        )
    return corpus_from_dict(
        {
            "format_version": 1,
            "documents": docs,
            "provisions": [{"code": "P", "title": "p", "description": "p."}],
            "links": {"H1-R1": ["P"]},
        }
    )


class TestLooSplits:
    def test_ten_docs_one_excluded(self):
        corpus = _ten_doc_corpus()
        splits = loo_splits(corpus, excluded_doc_ids={"H10"})
        assert len(splits) == 9
        for train_ids, test_id in splits:
            assert len(train_ids) == 8
            assert test_id not in train_ids
            assert "H10" not in train_ids and test_id != "H10"

    def test_two_docs_minimal(self, corpus):
        splits = loo_splits(corpus, excluded_doc_ids={"D3"})
        assert len(splits) == 2

    def test_unknown_excluded(self, corpus):
        with pytest.raises(EvaluationError, match="D9"):
            loo_splits(corpus, excluded_doc_ids={"D9"})

    def test_too_few_documents(self, corpus):
        with pytest.raises(EvaluationError):
            loo_splits(corpus, excluded_doc_ids={"D1", "D2"})


class TestRankModels:
    def _sets_for(self, corpus, dim, seed):
        reqs = hash_embed_set([(r.id, r.text) for r in corpus.requirements], dim, seed)
        provs = hash_embed_set(
            [(p.code, f"{p.title}: {p.description}") for p in corpus.catalog], dim, seed
        )
        return reqs, provs

    def test_perfect_model_ranks_first(self, corpus):
        # Build a synthetic "model" whose scores separate GT perfectly.
        req_ids = list(corpus.requirement_ids)
        codes = list(corpus.codes)
        dim = len(codes)
        req_vectors = {}
        for rid in req_ids:
            v = np.full(dim, 0.01)
            for j, code in enumerate(codes):
                if code in corpus.ground_truth.codes_for(rid):
                    v[j] = 1.0
            req_vectors[rid] = v
        prov_vectors = {code: np.eye(dim)[j] for j, code in enumerate(codes)}
        perfect = (
            EmbeddingSet(dim=dim, provider_tag="perfect", vectors=req_vectors),
            EmbeddingSet(dim=dim, provider_tag="perfect", vectors=prov_vectors),
        )
        noisy = self._sets_for(corpus, 32, 999)
        ranked = rank_models([("noisy", noisy), ("perfect", perfect)], corpus)
        assert ranked[0][0] == "perfect"
        assert ranked[0][1] > ranked[1][1]

    def test_three_hash_variants_match_naive_oracle(self, corpus):
        from tracelink.embeddings import build_similarity_matrix

        entries = [
            (f"hash:{dim}:{seed}", self._sets_for(corpus, dim, seed))
            for dim, seed in ((64, 1), (64, 2), (32, 7))
        ]
        ranked = rank_models(entries, corpus)
        expected = []
        for tag, (req_set, prov_set) in entries:
            matrix = build_similarity_matrix(
                req_set.restrict(list(corpus.requirement_ids)),
                prov_set.restrict(list(corpus.codes)),
            )
            scores, labels = pooled_pairs(matrix, corpus.ground_truth)
            expected.append((tag, roc_auc(scores, labels, mode="sweep")))
        expected.sort(key=lambda t: (-t[1], t[0]))
        assert ranked == expected

    def test_coverage_gap_named(self, corpus):
        reqs, provs = self._sets_for(corpus, 32, 1)
        broken = EmbeddingSet(
            dim=32,
            provider_tag="broken",
            vectors={k: v for k, v in reqs.vectors.items() if k != "D1-R1"},
        )
        with pytest.raises(EvaluationError, match="D1-R1"):
            rank_models([("broken", (broken, provs))], corpus)


class TestMapPerfectRankingIff:
    def test_map_is_one_iff_all_relevant_outrank_irrelevant(self):
        codes = ("a", "b", "c", "d")
        perfect = SimilarityMatrix(
            ("r1", "r2"), codes, [[0.9, 0.8, 0.2, 0.1], [0.7, 0.1, 0.9, 0.2]]
        )
        gt = {"r1": frozenset({"a", "b"}), "r2": frozenset({"a", "c"})}
        assert map_score(perfect, gt) == 1.0
        # Swap one pair so an irrelevant provision outranks a relevant one.
        imperfect = SimilarityMatrix(
            ("r1", "r2"), codes, [[0.9, 0.15, 0.2, 0.1], [0.7, 0.1, 0.9, 0.2]]
        )
        assert map_score(imperfect, gt) < 1.0


class TestFisherSymmetries:
    @given(
        st.integers(0, 10),
        st.integers(0, 10),
        st.integers(0, 10),
        st.integers(0, 10),
    )
    @settings(max_examples=80)
    def test_row_and_column_swap_invariance(self, a, b, c, d):
        base = fisher_exact(ContingencyTable2x2(a, b, c, d))
        rows_swapped = fisher_exact(ContingencyTable2x2(c, d, a, b))
        cols_swapped = fisher_exact(ContingencyTable2x2(b, a, d, c))
        assert base == pytest.approx(rows_swapped, abs=1e-10)
        assert base == pytest.approx(cols_swapped, abs=1e-10)

    @given(
        st.integers(0, 10),
        st.integers(0, 10),
        st.integers(0, 10),
        st.integers(0, 10),
    )
    @settings(max_examples=80)
    def test_matches_exact_rational_oracle(self, a, b, c, d):
        assert fisher_exact(ContingencyTable2x2(a, b, c, d)) == pytest.approx(
            float(_fisher_oracle(a, b, c, d)), abs=1e-10
        )
