import math

import numpy as np
import pytest
from sklearn.metrics import average_precision_score

from training.metrics import (
    avg_predicted_count,
    avg_true_count,
    f1_micro,
    ndcg_at_k,
    pr_auc_micro,
    precision_at_k,
    ranking,
)
from utils.errors import DimensionError, MetricError


def random_case(seed, n=1000, labels=None):
    rng = np.random.default_rng(seed)
    labels = labels or int(rng.integers(2, 11))
    scores = rng.random((n, labels))
    truth = (rng.random((n, labels)) < 0.3).astype(float)
    truth[:, 0] = np.where(truth.sum(axis=1) == 0, 1.0, truth[:, 0])
    return scores, truth


def brute_f1(scores, labels, threshold):
    tp = fp = fn = 0
    for s_row, y_row in zip(scores, labels):
        for s, y in zip(s_row, y_row):
            pred = s >= threshold
            tp += pred and y == 1
            fp += pred and y == 0
            fn += (not pred) and y == 1
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)


def brute_precision_at_k(scores, labels, k):
    total = 0.0
    for s_row, y_row in zip(scores, labels):
        order = sorted(range(len(s_row)), key=lambda j: (-s_row[j], j))
        total += sum(y_row[j] for j in order[:k]) / k
    return total / len(scores)


def brute_ndcg(scores, labels, k):
    values = []
    for s_row, y_row in zip(scores, labels):
        m = int(sum(y_row))
        if m == 0:
            continue
        order = sorted(range(len(s_row)), key=lambda j: (-s_row[j], j))
        dcg = sum(y_row[j] / math.log2(rank + 2) for rank, j in enumerate(order[:k]))
        values.append(dcg / min(k, m))
    return sum(values) / len(values)


class TestAgainstBruteForce:
    @pytest.mark.parametrize("seed", range(5))
    def test_f1(self, seed):
        scores, truth = random_case(seed)
        assert f1_micro(scores, truth, 0.5) == pytest.approx(brute_f1(scores, truth, 0.5), abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_precision_at_k(self, seed):
        scores, truth = random_case(seed)
        assert precision_at_k(scores, truth, 3) == pytest.approx(brute_precision_at_k(scores, truth, 3), abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_ndcg(self, seed):
        scores, truth = random_case(seed)
        assert ndcg_at_k(scores, truth, 5) == pytest.approx(brute_ndcg(scores, truth, 5), abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_pr_auc_matches_sklearn_on_untied_scores(self, seed):
        scores, truth = random_case(seed)
        expected = average_precision_score(truth.reshape(-1), scores.reshape(-1))
        assert pr_auc_micro(scores, truth) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_metrics_lie_in_unit_interval(self, seed):
        scores, truth = random_case(seed)
        for value in (
            f1_micro(scores, truth),
            pr_auc_micro(scores, truth),
            precision_at_k(scores, truth),
            ndcg_at_k(scores, truth),
        ):
            assert 0.0 <= value <= 1.0


class TestHandCases:
    def test_f1_two_thirds(self):
        # TP=2, FP=1, FN=1
        scores = [[0.9, 0.8, 0.1], [0.2, 0.7, 0.3]]
        labels = [[1, 0, 0], [0, 1, 1]]
        assert f1_micro(scores, labels) == pytest.approx(2 / 3)

    def test_f1_without_true_positives_is_zero(self):
        assert f1_micro([[0.1, 0.2]], [[1, 1]]) == 0.0

    def test_precision_at_5_divides_by_k(self):
        scores = [[0.9, 0.8, 0.7, 0.6, 0.5, 0.4]]
        labels = [[1, 0, 1, 0, 0, 1]]
        assert precision_at_k(scores, labels, 5) == pytest.approx(2 / 5)

    def test_ndcg_two_hits_at_top(self):
        scores = [[0.9, 0.8, 0.1, 0.0]]
        labels = [[1, 1, 0, 0]]
        # DCG = 1 + 1/log2(3), IDCG = min(5, 2) = 2
        assert ndcg_at_k(scores, labels, 5) == pytest.approx((1 + 1 / math.log2(3)) / 2)

    def test_ndcg_hits_at_first_and_third_rank(self):
        scores = [[0.9, 0.8, 0.7, 0.1, 0.0]]
        labels = [[1, 0, 1, 0, 0]]
        assert ndcg_at_k(scores, labels, 5) == pytest.approx(0.75)

    def test_ndcg_single_target_at_second_rank(self):
        scores = [[0.9, 0.8, 0.1]]
        labels = [[0, 1, 0]]
        assert ndcg_at_k(scores, labels, 5) == pytest.approx(1 / math.log2(3))

    def test_perfect_single_label_ranking(self):
        scores = [[0.9, 0.1], [0.2, 0.7]]
        labels = [[1, 0], [0, 1]]
        assert ndcg_at_k(scores, labels) == pytest.approx(1.0)
        assert pr_auc_micro(scores, labels) == pytest.approx(1.0)

    def test_pr_auc_hand_case(self):
        scores = [[0.9, 0.8, 0.7, 0.6]]
        labels = [[1, 0, 1, 0]]
        assert pr_auc_micro(scores, labels) == pytest.approx((1.0 + 2 / 3) / 2)

    def test_ties_break_by_label_id(self):
        np.testing.assert_array_equal(ranking(np.array([[0.5, 0.7, 0.5, 0.7]])), [[1, 3, 0, 2]])
        assert precision_at_k([[0.5, 0.5, 0.5]], [[0, 0, 1]], 1) == 0.0
        assert precision_at_k([[0.5, 0.5, 0.5]], [[1, 0, 0]], 1) == 1.0

    def test_counts(self):
        scores = [[0.9, 0.6, 0.1], [0.2, 0.3, 0.4]]
        labels = [[1, 1, 1], [0, 1, 0]]
        assert avg_predicted_count(scores, 0.5) == pytest.approx((1.0, 1.0))
        assert avg_true_count(labels) == pytest.approx((2.0, 1.0))


class TestErrors:
    def test_pr_auc_without_positives(self):
        with pytest.raises(MetricError):
            pr_auc_micro([[0.2, 0.9]], [[0, 0]])

    def test_empty_input(self):
        with pytest.raises(MetricError):
            f1_micro(np.zeros((0, 3)), np.zeros((0, 3)))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            precision_at_k(np.zeros((2, 3)), np.zeros((2, 4)))

    @pytest.mark.parametrize("threshold", [0.0, 1.0, -0.2])
    def test_threshold_outside_open_interval(self, threshold):
        with pytest.raises(MetricError):
            f1_micro([[0.5]], [[1]], threshold)

    def test_k_below_one(self):
        with pytest.raises(MetricError):
            ndcg_at_k([[0.5]], [[1]], 0)


if __name__ == "__main__":
    pytest.main([__file__])
