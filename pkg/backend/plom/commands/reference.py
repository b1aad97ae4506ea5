"""`plom reference`: Gaussian validation of the transient spectrum"""

import argparse

from plom.commands.common import open_store
from plom.config import (
    REFERENCE_DELTA_T,
    REFERENCE_INSTANT,
    REFERENCE_N_INSTANTS,
    REFERENCE_ND_GRID,
)
from plom.exceptions import EXIT_OK
from plom.services import gaussian_reference
from plom.services.pipeline import stage


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("reference", help="Estimated vs exact Fokker-Planck rates for a Gaussian")
    parser.add_argument("--nd", type=int, default=1200, help="Training realizations (n_mc defaults to the same)")
    parser.add_argument("--n-mc", type=int, help="ISDE realizations")
    parser.add_argument("--delta-t", type=float, default=REFERENCE_DELTA_T)
    parser.add_argument("--n-instants", type=int, default=REFERENCE_N_INSTANTS)
    parser.add_argument("--instant", type=int, default=REFERENCE_INSTANT, help="n of the kernel [K_hat(n dt)]")
    parser.add_argument("--sweep", action="store_true", help="Also compute err_lambda over the n_d grid")
    parser.add_argument("--grid", type=int, nargs="+", default=REFERENCE_ND_GRID, help="n_d grid for --sweep")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--output", help="Output directory")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    store = open_store(args)
    options = {"delta_t": args.delta_t, "n_instants": args.n_instants, "instant": args.instant}
    with stage("reference"):
        result = gaussian_reference.reference_spectrum(n_d=args.nd, n_mc=args.n_mc, seed=args.seed, **options)
    rows = list(zip(range(len(result["rates"])), result["exact"], result["rates"]))
    store.write_rows("curves/reference_rates.csv", ["alpha", "exact", "estimated"], rows)
    store.write_rows(
        "curves/convergence.csv",
        ["n", "ybar", "sbar"],
        [(n, y, s) for n, (y, s) in enumerate(zip(result["ybar"], result["sbar"]), start=1)],
    )

    if args.sweep:
        with stage("reference-sweep"):
            sweep = gaussian_reference.nd_sweep(args.grid, seed=args.seed, **options)
        store.write_rows("curves/reference_sweep.csv", ["n_d", "err_lambda"], [(r["n_d"], r["err_lambda"]) for r in sweep])
        result["sweep"] = sweep
    store.write_json("reference.json", result)

    print(f"n_d={result['n_d']} s={result['s']:.4f} s_hat={result['s_hat']:.4f} s_SB={result['s_sb']:.4f}")
    for alpha, exact, estimated in rows:
        print(f"alpha={alpha}: exact={exact:.4f} estimated={estimated:.4f}")
    print(f"err_lambda={result['err_lambda']:.4e} stationarity={result['stationarity']:.4f}")
    return EXIT_OK
