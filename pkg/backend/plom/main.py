"""Command-line entry point"""

import argparse
import logging
from collections.abc import Sequence

from plom import __version__
from plom.commands import MODULES
from plom.config import LOG_FORMAT, LOG_LEVEL, OUTPUT_DIR
from plom.exceptions import InternalError, PlomError
from plom.parallel import set_thread_cap
from plom.storage import ArtifactStore

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plom", description="Probabilistic learning on manifolds with DMAPS and transient bases"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, help="Worker cap for block-parallel stages")
    parser.add_argument(
        "--log-level", default=LOG_LEVEL, choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in MODULES:
        module.register(subparsers)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT)
    set_thread_cap(args.threads)

    try:
        return int(args.handler(args))
    except PlomError as e:
        logger.error(f"{args.command} failed ({e.kind}, stage {e.stage}): {e.message}")
        return write_error(args, e)
    except Exception as e:
        logger.exception(f"{args.command} failed with an unexpected error")
        return write_error(args, InternalError(f"{type(e).__name__}: {e}", exception=type(e).__name__))


def write_error(args: argparse.Namespace, error: PlomError) -> int:
    """error.json in the command's output directory; returns the exit code"""
    store = getattr(args, "store", None)
    if store is None:
        store = ArtifactStore(getattr(args, "output", None) or OUTPUT_DIR, auto_create=False)
    store.write_error(error.to_record())
    return error.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
