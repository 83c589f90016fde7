import math

import numpy as np
import pytest

from fusebench.metrics import (
    aggregate,
    evaluate_scores,
    mcnemar,
    mcnemar_from_counts,
    precision_recall_f1,
    relative_gain,
    roc_auc,
)


def pair_count_auc(scores, labels):
    """Exhaustive positive-negative pair counting; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    pos = scores[labels]
    neg = scores[~labels]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (pos.size * neg.size)


def brute_force_exact_p(b, c):
    """Two-sided exact binomial p over the full pmf."""
    n = b + c
    k = min(b, c)
    tail = sum(math.comb(n, i) * 0.5 ** n for i in range(k + 1))
    return min(1.0, 2.0 * tail)


class TestRocAuc:
    def test_fixture(self):
        assert roc_auc([0.8, 0.35, 0.4, 0.1], [1, 1, 0, 0]) == 0.75

    def test_perfect_separation(self):
        assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_all_equal_scores(self):
        assert roc_auc([0.3, 0.3, 0.3, 0.3], [1, 0, 1, 0]) == 0.5

    def test_matches_pair_counting_on_random_cases(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(2, 51))
            labels = rng.random(n) < rng.uniform(0.2, 0.8)
            if labels.all() or not labels.any():
                labels[0] = True
                labels[-1] = False
            # coarse grid of score values forces plenty of ties
            scores = rng.integers(0, 6, size=n) / 5.0
            assert abs(roc_auc(scores, labels) - pair_count_auc(scores, labels)) <= 1e-12

    def test_complement_identity_for_tie_free_scores(self):
        rng = np.random.default_rng(5)
        scores = rng.permutation(np.linspace(0.0, 1.0, 20))
        labels = rng.random(20) < 0.5
        labels[0], labels[1] = True, False
        total = roc_auc(scores, labels) + roc_auc(scores, ~labels)
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(6)
        scores = rng.random(30)
        labels = rng.random(30) < 0.5
        labels[0], labels[1] = True, False
        transformed = np.exp(3.0 * scores) + 7.0
        assert roc_auc(scores, labels) == pytest.approx(
            roc_auc(transformed, labels), abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            roc_auc([0.2, 0.8], [1, 1])


class TestPrecisionRecallF1:
    def test_perfect_predictions(self):
        p, r, f1 = precision_recall_f1([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
        assert (p, r, f1) == (1.0, 1.0, 1.0)

    def test_all_predicted_negative_zero_convention(self):
        p, r, f1 = precision_recall_f1([0.1, 0.2, 0.3], [1, 1, 0])
        assert (p, r, f1) == (0.0, 0.0, 0.0)

    def test_counts_fixture(self):
        # TP=3, FP=1, FN=2 -> P=0.75, R=0.6, F1=0.6667
        scores = [0.9, 0.9, 0.9, 0.9, 0.1, 0.1]
        labels = [1, 1, 1, 0, 1, 1]
        p, r, f1 = precision_recall_f1(scores, labels)
        assert p == pytest.approx(0.75)
        assert r == pytest.approx(0.6)
        assert f1 == pytest.approx(2 * 0.45 / 1.35)

    def test_zero_division_flag_in_record(self):
        rm = evaluate_scores([0.1, 0.2, 0.3, 0.9], [1, 1, 0, 1])
        assert not rm.zero_division
        rm = evaluate_scores([0.1, 0.2, 0.3, 0.4], [1, 1, 0, 1])
        assert rm.zero_division


class TestMcNemar:
    def test_identical_predictions(self):
        out = mcnemar([1, 0, 1], [1, 0, 1], [1, 1, 0])
        assert out.b == out.c == 0
        assert out.p_value == 1.0

    def test_exact_fixture_b2_c8(self):
        out = mcnemar_from_counts(2, 8)
        assert out.method == "exact_binomial"
        assert out.p_value == pytest.approx(112 / 1024, abs=1e-15)

    def test_corrected_fixture_b10_c0(self):
        out = mcnemar_from_counts(10, 0, method="corrected")
        assert out.statistic == pytest.approx(8.1)
        assert out.p_value == pytest.approx(0.00443, abs=1e-4)

    def test_auto_crossover_at_25_discordant(self):
        assert mcnemar_from_counts(12, 12).method == "exact_binomial"
        assert mcnemar_from_counts(13, 12).method == "corrected_chi_square"

    def test_exact_matches_brute_force(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            b = int(rng.integers(0, 13))
            c = int(rng.integers(0, 13))
            out = mcnemar_from_counts(b, c, method="exact")
            assert out.p_value == pytest.approx(brute_force_exact_p(b, c), abs=1e-12)

    def test_symmetry_swaps_counts(self):
        rng = np.random.default_rng(9)
        labels = rng.random(60) < 0.5
        preds_a = rng.random(60) < 0.5
        preds_b = rng.random(60) < 0.5
        ab = mcnemar(preds_a, preds_b, labels)
        ba = mcnemar(preds_b, preds_a, labels)
        assert ab.p_value == pytest.approx(ba.p_value, abs=1e-15)
        assert (ab.b, ab.c) == (ba.c, ba.b)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            mcnemar([1, 0], [1], [1, 0])


def _runs(aucs):
    return [
        evaluate_scores(
            np.array([0.9, 0.8, 0.2, 0.1]) * a, np.array([1, 1, 0, 0], bool)
        )
        for a in aucs
    ]


class TestAggregate:
    def test_mean_and_sample_std(self):
        runs = _runs([1.0, 1.0, 1.0])
        for r, auc in zip(runs, [0.70, 0.72, 0.74]):
            r.auc = auc
        agg = aggregate(runs)
        assert agg.mean["auc"] == pytest.approx(0.72)
        assert agg.std["auc"] == pytest.approx(0.02)

    def test_single_run_std_zero(self):
        agg = aggregate(_runs([1.0]))
        assert agg.n_runs == 1
        assert agg.std["auc"] == 0.0

    def test_permutation_invariant(self):
        runs = _runs([1.0, 1.0, 1.0])
        for r, auc in zip(runs, [0.61, 0.75, 0.68]):
            r.auc = auc
        fwd = aggregate(runs)
        rev = aggregate(list(reversed(runs)))
        assert fwd.mean == rev.mean
        assert fwd.std == rev.std

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([])


class TestRelativeGain:
    def test_reference_annotations_within_tolerance(self):
        # printed gains were computed on unrounded means: +-0.15 pp slack
        assert abs(relative_gain(86.0, 81.5) - 5.5) <= 0.15
        assert abs(relative_gain(96.2, 95.2) - 1.0) <= 0.15

    def test_equal_inputs_zero(self):
        assert relative_gain(70.0, 70.0) == 0.0

    def test_unrounded_vs_rounded_example(self):
        # 71.7 over 70.3 displays 1.9-2.0 depending on rounding of inputs
        assert relative_gain(71.7, 70.3) == pytest.approx(1.99, abs=0.01)

    def test_nonpositive_baseline_rejected(self):
        with pytest.raises(ValueError):
            relative_gain(50.0, 0.0)
