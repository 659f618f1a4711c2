"""
generate: write a synthetic trajectory file
"""

import argparse
import logging

import pandas as pd

from commands.common import add_format_flag, emit, emit_frame
from config import load_synth_config, parse_overrides
from ehr.codes import LabelMode
from ehr.synthetic import generate_synthetic, label_marginals
from ehr.trajectory import build_instances, write_trajectory_file

logger = logging.getLogger(__name__)

DEFAULT_SEED = 7


def register(subparsers) -> None:
    parser = subparsers.add_parser("generate", help="generate a synthetic trajectory file")
    parser.add_argument("--config", help="flat key=value generator config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--out", required=True, help="output trajectory file (JSON lines)")
    add_format_flag(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = load_synth_config(args.config, parse_overrides(args.overrides))
    trajectories = generate_synthetic(config, args.seed)
    write_trajectory_file(args.out, trajectories)
    logger.info("Wrote %d trajectories to %s", len(trajectories), args.out)

    instances = build_instances(trajectories)
    marginals = label_marginals(instances, LabelMode.CODE_FLAG)
    summary = {
        "trajectories": len(trajectories),
        "events": sum(len(t.events) for t in trajectories),
        "instances": len(instances),
        "labels": len(marginals),
        "seed": args.seed,
    }

    if args.format == "csv":
        frame = marginals.rename_axis("label").reset_index()
        for key, value in summary.items():
            frame[key] = value
        emit_frame(frame, "csv")
    else:
        emit(" ".join(f"{key}={value}" for key, value in summary.items()))
        emit_frame(pd.DataFrame({"label": marginals.index, "marginal": marginals.round(4).values}), "text")
    return 0
