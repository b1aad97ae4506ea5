"""`plom metrics`: KL divergence, entropy and MI of sample files"""

import argparse

from plom.commands.common import open_store
from plom.config import MI_SUBSAMPLE_CAP
from plom.exceptions import EXIT_OK
from plom.services import info_metrics
from plom.services.pipeline import stage
from plom.storage import read_matrix


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("metrics", help="Information metrics of two sample files")
    parser.add_argument("first", help="Samples of the first distribution (one realization per column)")
    parser.add_argument("second", help="Samples of the reference distribution")
    parser.add_argument("--format", choices=["auto", "csv", "bin"], default="auto")
    parser.add_argument("--cap", type=int, default=MI_SUBSAMPLE_CAP, help="Subsample cap for the estimators")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--output", help="Output directory")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    store = open_store(args)
    with stage("metrics"):
        first = info_metrics.sample_set(read_matrix(args.first, args.format), cap=args.cap, seed=args.seed)
        second = info_metrics.sample_set(read_matrix(args.second, args.format), cap=args.cap, seed=args.seed)
        result = {
            "first": args.first,
            "second": args.second,
            "nu": first.nu,
            "n_first": first.n,
            "n_second": second.n,
            "subsample_cap": args.cap,
            "kl": info_metrics.kl_divergence(first, second),
            "entropy_first": info_metrics.entropy(first),
            "entropy_second": info_metrics.entropy(second),
            "mi_first": info_metrics.mutual_information(first),
            "mi_second": info_metrics.mutual_information(second),
        }
    store.write_json("metrics.json", result)
    print(f"KL={result['kl']:.6g}")
    print(f"entropy: {result['entropy_first']:.6g} / {result['entropy_second']:.6g}")
    print(f"MI: {result['mi_first']:.6g} / {result['mi_second']:.6g}")
    return EXIT_OK
