"""
eval: metric report for a checkpoint on a trajectory file
"""

import argparse
import logging

from commands.common import (
    add_format_flag,
    add_vocab_dir_flag,
    emit,
    emit_frame,
    frame_to_csv,
    load_checkpoint_with_vocab,
    load_dataset,
)
from training.evaluation import evaluate
from training.trainer import split
from utils.errors import DataError
from utils.io import atomic_write_text

logger = logging.getLogger(__name__)

SPLITS = ("all", "train", "val", "test")


def register(subparsers) -> None:
    parser = subparsers.add_parser("eval", help="evaluate a checkpoint")
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--data", required=True, help="trajectory file (JSON lines)")
    parser.add_argument(
        "--split",
        choices=SPLITS,
        default="all",
        help="recompute the checkpoint's patient split and evaluate one part",
    )
    parser.add_argument("--out-csv", help="also write the report row as CSV")
    add_vocab_dir_flag(parser)
    add_format_flag(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint_with_vocab(args.checkpoint, args.vocab_dir)
    config = checkpoint.config
    _, instances = load_dataset(args.data, config)
    if not instances:
        raise DataError(f"no usable nowcast instances in {args.data}")

    if args.split != "all":
        parts = dict(zip(SPLITS[1:], split(instances, config.ratios, config.seed)))
        instances = parts[args.split]

    report = evaluate(checkpoint.model, instances, checkpoint.vocab, config)
    report.variant = checkpoint.metadata.get("test_report", {}).get("variant")

    if args.out_csv:
        atomic_write_text(args.out_csv, frame_to_csv(report.to_frame()))
    if args.format == "csv":
        emit_frame(report.to_frame(), "csv")
    else:
        emit(report.to_kv_text())
        emit(report.counts_line())
    return 0
