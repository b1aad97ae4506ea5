"""`plom run`: the full pipeline from a config file"""

import argparse
import logging

from plom.commands.common import add_input_arguments, load_run_config, open_store
from plom.exceptions import EXIT_OK
from plom.services.pipeline import run_pipeline

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("run", help="Bases, selection of n_opt and the three learned sets")
    parser.add_argument("run_config", nargs="?", help="INI run configuration")
    add_input_arguments(parser)
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    cfg = load_run_config(args, config_path=args.run_config)
    store = open_store(args, cfg.run.output_dir)

    def progress(stage: str, done: int, total: int) -> None:
        logger.debug(f"{stage}: {done}/{total}")

    payload = run_pipeline(cfg, store, progress_callback=progress)
    selection = payload["selection"]
    print(f"nu={payload['training']['nu']} n_d={payload['training']['n_d']} eps_opt={payload['dmaps']['eps_opt']:.6g}")
    if selection["n_opt"] is None:
        print("No admissible instant: the DMAPS basis is used for PLoM-ROTB")
    else:
        record = next(r for r in selection["records"] if r["n"] == selection["n_opt"])
        print(f"n_opt={selection['n_opt']} gamma={record['gamma_deg']:.3f} deg MI={record['mi']:.6g}")
    for name, regime in payload["regimes"].items():
        print(f"{name:8s} d2={regime['d2']:.6g} KL={regime['kl']:.6g} MI={regime['mi']:.6g}")
    print(f"Artifacts in {store.root}")
    return EXIT_OK
