"""
train: split -> train -> test-set report, plus checkpoint, vocabulary files and per-epoch log
"""

import argparse
import logging

from commands.common import (
    add_config_flags,
    add_format_flag,
    build_vocab,
    emit,
    emit_frame,
    load_dataset,
    save_vocab_files,
    train_config_from_args,
    write_csv_with_config,
)
from config import Config
from ehr.batching import usable_instances
from ehr.trajectory import median_panel_gap
from model.checkpoint import Checkpoint, save_checkpoint
from model.trace import create_model
from training.evaluation import evaluate
from training.trainer import split, train
from utils.errors import DataError
from utils.io import atomic_write_text

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="train a model and write a checkpoint")
    parser.add_argument("--data", required=True, help="trajectory file (JSON lines)")
    parser.add_argument("--out-checkpoint", required=True, help="checkpoint path")
    parser.add_argument("--ablate", choices=sorted(Config.ABLATION_FLAGS), help="ablation variant")
    parser.add_argument("--log-csv", help="per-epoch log (default: <checkpoint>.log.csv)")
    parser.add_argument("--report", help="write the test report as key=value text")
    add_config_flags(parser)
    add_format_flag(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = train_config_from_args(args)
    if args.ablate:
        config = config.with_ablation(args.ablate)

    trajectories, instances = load_dataset(args.data, config)
    if not instances:
        raise DataError(f"no usable nowcast instances in {args.data}")

    train_set, val_set, test_set = split(instances, config.ratios, config.seed)
    vocab = build_vocab(train_set, config)
    train_set = usable_instances(train_set, vocab)
    val_set = usable_instances(val_set, vocab)
    logger.info("Vocabulary: %d input tokens, %d labels", vocab.size, vocab.num_labels)

    model = create_model(config, vocab.size, vocab.num_labels)
    result = train(model, train_set, val_set, vocab, config)
    report = evaluate(result.model, test_set, vocab, config)
    report.variant = Config.ABLATION_FLAGS.get(args.ablate, "full")

    save_checkpoint(
        args.out_checkpoint,
        Checkpoint(
            model=result.model,
            vocab=vocab,
            config=config,
            best_val=result.best_val,
            median_gap=median_panel_gap(trajectories),
            rng_state=result.rng_state,
            metadata={
                "data": args.data,
                "best_epoch": result.best_epoch,
                "stopped_early": result.stopped_early,
                "test_report": report.to_dict(),
            },
        ),
    )
    save_vocab_files(args.out_checkpoint, vocab)
    write_csv_with_config(args.log_csv or f"{args.out_checkpoint}.log.csv", result.history, config)
    if args.report:
        atomic_write_text(args.report, report.to_kv_text(config))

    if args.format == "csv":
        emit_frame(report.to_frame(), "csv")
    else:
        emit(report.to_kv_text())
        emit(report.counts_line())
    return 0
