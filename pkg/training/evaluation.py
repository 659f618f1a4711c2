"""
Evaluation reports
==================
EvalReport bundles the metric suite for one (model, dataset) pair and knows
how to render itself as key=value text, a flat dict or a one-row DataFrame.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from config import TrainConfig
from ehr.batching import encode_batch, usable_instances
from ehr.codes import MaskTime
from ehr.trajectory import NowcastInstance
from ehr.vocab import Vocabulary
from model.trace import TraceModel
from training.metrics import (
    avg_predicted_count,
    avg_true_count,
    f1_micro,
    ndcg_at_k,
    pr_auc_micro,
    precision_at_k,
)
from training.trainer import predict_in_chunks
from utils.errors import DataError

logger = logging.getLogger(__name__)

METRIC_FIELDS = ["f1", "pr_auc", "precision_at_k", "ndcg_at_k"]
COUNT_FIELDS = ["pred_count_mean", "pred_count_std", "true_count_mean", "true_count_std"]


@dataclass
class EvalReport:
    f1: float
    pr_auc: float
    precision_at_k: float
    ndcg_at_k: float
    pred_count_mean: float
    pred_count_std: float
    true_count_mean: float
    true_count_std: float
    k: int = 5
    threshold: float = 0.5
    n_instances: int = 0
    seed: Optional[int] = None
    variant: Optional[str] = None
    per_seed: List["EvalReport"] = field(default_factory=list)

    def counts_line(self) -> str:
        return (
            f"pred {self.pred_count_mean:.2f} ± {self.pred_count_std:.2f} | "
            f"true {self.true_count_mean:.2f} ± {self.true_count_std:.2f}"
        )

    def to_dict(self) -> Dict[str, Any]:
        """Flat record without the per-seed breakdown"""
        record = asdict(self)
        record.pop("per_seed")
        return record

    def to_kv_text(self, config: Optional[TrainConfig] = None) -> str:
        """key=value lines; the resolved config follows under a config. prefix"""
        lines = [f"{key}={value}" for key, value in self.to_dict().items() if value is not None]
        if config is not None:
            lines.extend(f"config.{key}={value}" for key, value in sorted(config.model_dump().items()))
        return "\n".join(lines) + "\n"

    def to_frame(self) -> pd.DataFrame:
        """One row per seed when a breakdown exists, otherwise a single row"""
        reports = self.per_seed or [self]
        return pd.DataFrame([r.to_dict() for r in reports])


def evaluate(
    model: TraceModel,
    instances: Sequence[NowcastInstance],
    vocab: Vocabulary,
    config: TrainConfig,
) -> EvalReport:
    """
    Metric suite at config.threshold / config.k. Instances without any
    in-vocabulary target label are dropped with a warning.

    Raises:
        DataError: nothing left to evaluate
    """
    usable = usable_instances(instances, vocab)
    if not usable:
        raise DataError("no evaluable instances (empty data or no known target labels)")

    batch = encode_batch(usable, vocab, config.max_len, MaskTime(config.mask_time))
    scores = predict_in_chunks(model, batch, config.batch_size)
    labels = batch.labels

    pred_mean, pred_std = avg_predicted_count(scores, config.threshold)
    true_mean, true_std = avg_true_count(labels)
    report = EvalReport(
        f1=f1_micro(scores, labels, config.threshold),
        pr_auc=pr_auc_micro(scores, labels),
        precision_at_k=precision_at_k(scores, labels, config.k),
        ndcg_at_k=ndcg_at_k(scores, labels, config.k),
        pred_count_mean=pred_mean,
        pred_count_std=pred_std,
        true_count_mean=true_mean,
        true_count_std=true_std,
        k=config.k,
        threshold=config.threshold,
        n_instances=len(usable),
        seed=config.seed,
    )
    logger.info(
        "Evaluated %d instances: f1=%.4f pr_auc=%.4f p@%d=%.4f ndcg@%d=%.4f",
        report.n_instances, report.f1, report.pr_auc, config.k, report.precision_at_k, config.k, report.ndcg_at_k,
    )
    return report


def aggregate_reports(reports: Sequence[EvalReport]) -> EvalReport:
    """Mean of every metric over seeds; the inputs are kept as the breakdown"""
    if not reports:
        raise DataError("no reports to aggregate")
    means = {name: float(np.mean([getattr(r, name) for r in reports])) for name in METRIC_FIELDS + COUNT_FIELDS}
    first = reports[0]
    return EvalReport(
        **means,
        k=first.k,
        threshold=first.threshold,
        n_instances=int(sum(r.n_instances for r in reports)),
        seed=None,
        variant=first.variant,
        per_seed=list(reports),
    )
