"""
ablate: train and evaluate every ablation variant under shared seeds
"""

import argparse
import logging
from typing import List

from commands.common import (
    add_config_flags,
    add_format_flag,
    emit,
    emit_frame,
    load_dataset,
    train_config_from_args,
    write_csv_with_config,
)
from config import Config
from training.ablation import run_ablation
from utils.errors import ConfigError, DataError

logger = logging.getLogger(__name__)


def parse_seeds(raw: str) -> List[int]:
    try:
        seeds = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigError(f"Invalid --seeds '{raw}'. Expected comma-separated integers") from e
    if not seeds:
        raise ConfigError("--seeds is empty")
    return seeds


def register(subparsers) -> None:
    parser = subparsers.add_parser("ablate", help="compare full, w/o D, w/o P, w/o DP, w/o DPM")
    parser.add_argument("--data", required=True, help="trajectory file (JSON lines)")
    parser.add_argument("--seeds", help="comma-separated seeds (default: the config seed)")
    parser.add_argument(
        "--variants",
        help=f"comma-separated subset of: {', '.join(Config.ABLATION_VARIANTS)}",
    )
    parser.add_argument("--out-csv", help="comparison table CSV")
    parser.add_argument("--per-seed-csv", help="one report row per (variant, seed)")
    add_config_flags(parser)
    add_format_flag(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = train_config_from_args(args)
    seeds = parse_seeds(args.seeds) if args.seeds else [config.seed]
    variants = [v.strip() for v in args.variants.split(",")] if args.variants else None
    if variants:
        for variant in variants:
            config.with_ablation(variant)

    _, instances = load_dataset(args.data, config)
    if not instances:
        raise DataError(f"no usable nowcast instances in {args.data}")

    result = run_ablation(config, instances, seeds, variants)
    if args.out_csv:
        write_csv_with_config(args.out_csv, result.table, config)
    if args.per_seed_csv:
        write_csv_with_config(args.per_seed_csv, result.per_seed, config)

    if args.format == "csv":
        emit_frame(result.table, "csv")
    else:
        cells = ["variant"] + [c for c in result.table.columns if c.endswith("_cell")] + ["pred_count", "true_count"]
        emit_frame(result.table[cells].round(2), "text")
        emit(f"seeds={','.join(str(s) for s in seeds)}")
    return 0
