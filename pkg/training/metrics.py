"""
Multi-label nowcasting metrics
==============================
All functions take score and label matrices of shape [instances, labels].
Rankings break score ties by ascending label id; average precision breaks ties
by the stable row-major order of the pooled (instance, label) pairs.
"""

import logging
from typing import Tuple

import numpy as np

from utils.errors import DimensionError, MetricError

logger = logging.getLogger(__name__)


def _check(scores, labels) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.ndim != 2 or scores.shape != labels.shape:
        raise DimensionError("metric", scores.shape, labels.shape)
    if scores.shape[0] == 0:
        raise MetricError("metrics need at least one instance")
    return scores, labels


def _check_threshold(threshold: float) -> None:
    if not 0.0 < threshold < 1.0:
        raise MetricError(f"threshold must lie in (0, 1), got {threshold}")


def _check_k(k: int) -> None:
    if k < 1:
        raise MetricError(f"k must be >= 1, got {k}")


def ranking(scores: np.ndarray) -> np.ndarray:
    """Label ids per row by descending score, ties by ascending label id"""
    return np.argsort(-np.asarray(scores), axis=1, kind="stable")


def f1_micro(scores, labels, threshold: float = 0.5) -> float:
    """Micro F1 over every (instance, label) pair with prediction = score >= threshold"""
    _check_threshold(threshold)
    scores, labels = _check(scores, labels)
    predicted = scores >= threshold
    relevant = labels > 0.5
    tp = int(np.sum(predicted & relevant))
    fp = int(np.sum(predicted & ~relevant))
    fn = int(np.sum(~predicted & relevant))
    if tp == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def pr_auc_micro(scores, labels) -> float:
    """
    Average precision of the pooled score list: sum_n (R_n - R_{n-1}) P_n over
    the descending ranking, i.e. the mean precision at each positive.

    Raises:
        MetricError: no positive label in the batch
    """
    scores, labels = _check(scores, labels)
    flat_scores = scores.reshape(-1)
    flat_labels = labels.reshape(-1) > 0.5
    n_pos = int(flat_labels.sum())
    if n_pos == 0:
        raise MetricError("PR-AUC is undefined without positive labels")

    order = np.argsort(-flat_scores, kind="stable")
    hits = flat_labels[order]
    precision = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(precision[hits].sum() / n_pos)


def precision_at_k(scores, labels, k: int = 5) -> float:
    """Mean over instances of (relevant labels among the top k) / k"""
    _check_k(k)
    scores, labels = _check(scores, labels)
    top = ranking(scores)[:, :k]
    hits = np.take_along_axis(labels > 0.5, top, axis=1)
    return float(np.mean(hits.sum(axis=1) / k))


def ndcg_at_k(scores, labels, k: int = 5) -> float:
    """
    DCG@k over the predicted ranking divided by IDCG@k = min(k, m).

    All m targets share one timestamp, so the ideal ranking puts every one of
    them at the top rank with unit discount; NDCG < 1 for m > 1 even for a
    perfect ranker. Instances with m = 0 are skipped.
    """
    _check_k(k)
    scores, labels = _check(scores, labels)
    relevant = labels > 0.5
    m = relevant.sum(axis=1)
    keep = m > 0
    if not keep.any():
        raise MetricError("NDCG is undefined when no instance has a target label")
    if not keep.all():
        logger.debug("ndcg_at_k: skipping %d instances without targets", int((~keep).sum()))

    top = ranking(scores[keep])[:, :k]
    hits = np.take_along_axis(relevant[keep], top, axis=1).astype(np.float64)
    discounts = 1.0 / np.log2(np.arange(2, top.shape[1] + 2))
    dcg = hits @ discounts
    idcg = np.minimum(k, m[keep])
    return float(np.mean(dcg / idcg))


def avg_predicted_count(scores, threshold: float = 0.5) -> Tuple[float, float]:
    """(mean, population std) of the per-instance number of labels with score >= threshold"""
    _check_threshold(threshold)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] == 0:
        raise MetricError(f"expected a non-empty [instances, labels] matrix, got shape {scores.shape}")
    counts = (scores >= threshold).sum(axis=1)
    return float(counts.mean()), float(counts.std())


def avg_true_count(labels) -> Tuple[float, float]:
    labels = np.asarray(labels, dtype=np.float64)
    if labels.ndim != 2 or labels.shape[0] == 0:
        raise MetricError(f"expected a non-empty [instances, labels] matrix, got shape {labels.shape}")
    counts = (labels > 0.5).sum(axis=1)
    return float(counts.mean()), float(counts.std())
