"""
Helpers shared by the CLI commands
"""

import argparse
import io
import logging
import os
import sys
from typing import List, Optional, Tuple

import pandas as pd

from config import TrainConfig, load_train_config, parse_overrides
from ehr.codes import LabelMode
from ehr.trajectory import NowcastInstance, Trajectory, build_instances, parse_trajectory_file
from ehr.vocab import Vocabulary
from model.checkpoint import Checkpoint, load_checkpoint
from utils.errors import VocabularyError
from utils.io import atomic_write_text

logger = logging.getLogger(__name__)

FORMATS = ("text", "csv")


def add_config_flags(parser: argparse.ArgumentParser, seed_default: Optional[int] = None) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    parser.add_argument("--seed", type=int, default=seed_default, help="random seed")


def add_format_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=FORMATS, default="text", help="stdout format")


def train_config_from_args(args: argparse.Namespace) -> TrainConfig:
    return load_train_config(args.config, parse_overrides(args.overrides), args.seed)


def load_dataset(path: str, config: TrainConfig) -> Tuple[List[Trajectory], List[NowcastInstance]]:
    trajectories = parse_trajectory_file(path)
    return trajectories, build_instances(trajectories, all_panels=config.all_panels)


def label_mode(config: TrainConfig) -> LabelMode:
    return LabelMode(config.label_mode)


def build_vocab(instances: List[NowcastInstance], config: TrainConfig) -> Vocabulary:
    return Vocabulary.build(instances, label_mode(config))


def frame_to_csv(frame: pd.DataFrame) -> str:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, lineterminator="\n")
    return buffer.getvalue()


def emit(text: str) -> None:
    """Command results go to stdout; logs go to stderr"""
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    sys.stdout.flush()


def emit_frame(frame: pd.DataFrame, fmt: str) -> None:
    if fmt == "csv":
        emit(frame_to_csv(frame))
    else:
        emit(frame.to_string(index=False))


def write_csv_with_config(path: str, frame: pd.DataFrame, config: TrainConfig) -> None:
    """CSV preceded by '# key=value' lines of the resolved config (read back with comment='#')"""
    header = "".join(f"# {key}={value}\n" for key, value in sorted(config.model_dump().items()))
    atomic_write_text(path, header + frame_to_csv(frame))
    logger.info("Wrote %s (%d rows)", path, len(frame))


def vocab_dir_for(checkpoint_path: str) -> str:
    """Vocabulary TSVs live in <checkpoint>.vocab/"""
    return f"{checkpoint_path}.vocab"


def save_vocab_files(checkpoint_path: str, vocab: Vocabulary) -> str:
    directory = vocab_dir_for(checkpoint_path)
    vocab.save(directory)
    logger.info("Wrote vocabulary files to %s (%d tokens, %d labels)", directory, vocab.size, vocab.num_labels)
    return directory


def load_checkpoint_with_vocab(path: str, vocab_dir: Optional[str] = None) -> Checkpoint:
    """
    Load a checkpoint and the vocabulary files written next to it.

    Without an explicit vocab_dir, a missing <checkpoint>.vocab/ falls back to
    the vocabulary embedded in the checkpoint.

    Raises:
        VocabularyError: the files disagree with the checkpoint vocabulary
    """
    checkpoint = load_checkpoint(path)
    directory = vocab_dir or vocab_dir_for(path)
    if vocab_dir is None and not os.path.isdir(directory):
        logger.warning("No vocabulary files at %s, using the checkpoint copy", directory)
        return checkpoint

    vocab = Vocabulary.load(directory, checkpoint.vocab.label_mode)
    if vocab.id_to_token != checkpoint.vocab.id_to_token:
        raise VocabularyError(f"{directory}: input tokens differ from the checkpoint vocabulary")
    if vocab.id_to_label != checkpoint.vocab.id_to_label:
        raise VocabularyError(f"{directory}: labels differ from the checkpoint vocabulary")
    checkpoint.vocab = vocab
    return checkpoint


def add_vocab_dir_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--vocab-dir", help="vocabulary TSV directory (default: <checkpoint>.vocab)")
