"""
nowcast: ranked lab-label probabilities for one history
"""

import argparse
import logging
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from commands.common import add_format_flag, add_vocab_dir_flag, emit_frame, load_checkpoint_with_vocab
from ehr.batching import encode_batch
from ehr.codes import MaskTime
from ehr.trajectory import NowcastInstance, parse_trajectory_file
from model.checkpoint import Checkpoint
from training.metrics import ranking
from utils.errors import ContractError, DataError
from utils.validation import validate_timestamp

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("nowcast", help="predict the next lab group for one history")
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--history-file", required=True, help="file holding exactly one trajectory")
    parser.add_argument(
        "--at-time",
        type=float,
        help="time of the next lab draw (default: last event + median panel gap)",
    )
    parser.add_argument("--top-k", type=int, help="labels to print (default: config k)")
    add_vocab_dir_flag(parser)
    add_format_flag(parser)
    parser.set_defaults(handler=run)


def nowcast(
    checkpoint: Checkpoint,
    instance: NowcastInstance,
    top_k: int,
) -> List[Tuple[str, float]]:
    """Top-k (label, probability) pairs, ties by label id"""
    config = checkpoint.config
    batch = encode_batch([instance], checkpoint.vocab, config.max_len, MaskTime(config.mask_time))
    scores = checkpoint.model.predict_proba(batch)
    order = ranking(scores)[0, :top_k]
    return [(checkpoint.vocab.label_name(int(i)), float(scores[0, i])) for i in order]


def default_time(checkpoint: Checkpoint, last_time: float) -> float:
    gap = checkpoint.median_gap if checkpoint.median_gap is not None else checkpoint.config.period
    return last_time + gap


def run(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint_with_vocab(args.checkpoint, args.vocab_dir)
    trajectories = parse_trajectory_file(args.history_file)
    if len(trajectories) != 1:
        raise DataError(f"history file must hold exactly one trajectory, found {len(trajectories)}")
    traj = trajectories[0]
    if not traj.events:
        raise DataError("history is empty")

    last_time = traj.events[-1].t
    at_time: Optional[float] = args.at_time
    if at_time is None:
        at_time = default_time(checkpoint, last_time)
    is_valid, error_msg = validate_timestamp(at_time)
    if not is_valid:
        raise ContractError(f"--at-time: {error_msg}")
    if at_time < last_time:
        raise ContractError(f"--at-time {at_time} precedes the last history event at {last_time}")

    instance = NowcastInstance(traj.patient_id, traj.visit_id, traj.events, at_time, ())
    top_k = args.top_k or checkpoint.config.k
    if top_k < 1:
        raise ContractError(f"--top-k must be >= 1, got {top_k}")

    ranked = nowcast(checkpoint, instance, top_k)
    frame = pd.DataFrame(
        {
            "rank": np.arange(1, len(ranked) + 1),
            "label": [label for label, _ in ranked],
            "probability": [round(p, 6) for _, p in ranked],
        }
    )
    logger.info("Nowcast for %s/%s at t=%.2f", traj.patient_id, traj.visit_id, at_time)
    emit_frame(frame, args.format)
    return 0
