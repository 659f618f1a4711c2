"""
TRACE Nowcaster CLI
===================
Command-line surface for synthetic data generation, training, evaluation,
ablation and single-history nowcasting.

    python app.py generate --out data.jsonl
    python app.py train --data data.jsonl --out-checkpoint model.ckpt
    python app.py eval --checkpoint model.ckpt --data data.jsonl --split test
    python app.py nowcast --checkpoint model.ckpt --history-file one.jsonl
    python app.py ablate --data data.jsonl --seeds 1,2,3

Exit codes: 0 ok, 2 validation error, 3 numeric failure, 1 anything else.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from commands import ablate, eval as eval_command, generate, nowcast, train
from config import Config
from utils.errors import NumericError, TraceError

logger = logging.getLogger("trace")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3

COMMANDS = (generate, train, eval_command, nowcast, ablate)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trace",
        description="Time-aware Transformer nowcasting of the next lab group within a visit",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--log-level",
        default=None,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="logging level (default: TRACE_LOG_LEVEL or INFO)",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Register commands
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def configure_logging(level: Optional[str]) -> None:
    logging.basicConfig(
        level=(level or os.getenv("TRACE_LOG_LEVEL", Config.DEFAULT_LOG_LEVEL)).upper(),
        format=os.getenv("TRACE_LOG_FORMAT", Config.LOG_FORMAT),
        stream=sys.stderr,
        force=True,
    )


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    try:
        return args.handler(args)
    except NumericError as e:
        logger.error("Numeric failure: %s", e)
        return EXIT_NUMERIC
    except (TraceError, ValueError) as e:
        logger.error("%s", e)
        return EXIT_VALIDATION
    except OSError as e:
        logger.error("I/O error: %s", e)
        return EXIT_VALIDATION
    except Exception:
        logger.exception("Unexpected failure")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
