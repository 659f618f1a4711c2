"""
Ablation harness: full, w/o D, w/o P, w/o DP, w/o DPM under identical seeds
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import pandas as pd

from config import Config, TrainConfig
from ehr.batching import usable_instances
from ehr.codes import LabelMode
from ehr.trajectory import NowcastInstance
from ehr.vocab import Vocabulary
from model.trace import create_model
from training.evaluation import METRIC_FIELDS, EvalReport, aggregate_reports, evaluate
from training.trainer import split, train

logger = logging.getLogger(__name__)

FULL = "full"


@dataclass
class AblationResult:
    table: pd.DataFrame
    per_seed: pd.DataFrame
    reports: Dict[str, EvalReport] = field(default_factory=dict)


def format_delta(value: float, reference: float) -> str:
    """'(↓ 3.21%)' / '(↑ 0.50%)' relative to the reference; empty when equal or undefined"""
    if reference == 0 or value == reference:
        return ""
    pct = (value - reference) / reference * 100.0
    arrow = "↓" if pct < 0 else "↑"
    return f"({arrow} {abs(pct):.2f}%)"


def comparison_table(reports: Dict[str, EvalReport]) -> pd.DataFrame:
    """One row per variant: metric values, counts and a formatted cell with the delta to the full model"""
    full = reports.get(FULL)
    rows = []
    for variant, report in reports.items():
        row = {"variant": variant, "n_seeds": max(1, len(report.per_seed))}
        for name in METRIC_FIELDS:
            value = getattr(report, name)
            row[name] = value
            delta = format_delta(value, getattr(full, name)) if full is not None and variant != FULL else ""
            row[f"{name}_cell"] = f"{value:.4f} {delta}".rstrip()
        row["pred_count"] = report.pred_count_mean
        row["true_count"] = report.true_count_mean
        rows.append(row)
    return pd.DataFrame(rows)


def run_ablation(
    base_config: TrainConfig,
    instances: Sequence[NowcastInstance],
    seeds: Sequence[int],
    variants: Optional[Sequence[str]] = None,
) -> AblationResult:
    """
    For every seed: one patient split and one vocabulary, shared by all
    variants; each variant starts from create_model(config, seed) and is
    trained and evaluated on the test split.
    """
    variants = list(variants or Config.ABLATION_VARIANTS)
    per_variant: Dict[str, List[EvalReport]] = {v: [] for v in variants}

    for seed in seeds:
        config = base_config.model_copy(update={"seed": seed})
        train_set, val_set, test_set = split(instances, config.ratios, seed)
        vocab = Vocabulary.build(train_set, LabelMode(config.label_mode))
        train_set = usable_instances(train_set, vocab)
        val_set = usable_instances(val_set, vocab)

        for variant in variants:
            variant_config = config.with_ablation(variant)
            logger.info("Ablation seed=%d variant=%s", seed, variant)
            model = create_model(variant_config, vocab.size, vocab.num_labels)
            train(model, train_set, val_set, vocab, variant_config)
            report = evaluate(model, test_set, vocab, variant_config)
            report.variant = variant
            per_variant[variant].append(report)

    aggregated = {v: aggregate_reports(r) for v, r in per_variant.items()}
    for variant, report in aggregated.items():
        report.variant = variant

    per_seed = pd.DataFrame([r.to_dict() for reports in per_variant.values() for r in reports])
    return AblationResult(table=comparison_table(aggregated), per_seed=per_seed, reports=aggregated)
