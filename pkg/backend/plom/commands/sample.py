"""`plom plom`: PLoM sampling only, with a given or computed basis"""

import argparse
import logging

import numpy as np

from plom.commands.common import add_input_arguments, load_run_config, open_store
from plom.exceptions import EXIT_OK, InputError
from plom.models import KernelBasis
from plom.services import data_model, gkde, info_metrics, kernels, sampler, selection
from plom.services.pipeline import derived_seeds, load_input, plom_config, stage
from plom.storage import read_matrix

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("plom", help="Generate learned realizations")
    add_input_arguments(parser)
    parser.add_argument(
        "--basis",
        default="dmaps",
        help="'dmaps', 'full' (no projection) or a matrix file with n_d rows and m columns",
    )
    parser.add_argument("--constraints", choices=["none", "diagonal", "full"], help="Constraint mode")
    parser.add_argument("--n-mch", type=int, help="Number of learned matrices")
    parser.add_argument("--m0", type=int, help="Stormer-Verlet steps per restart")
    parser.set_defaults(handler=handle)


def resolve_basis(name: str, n_d: int) -> KernelBasis | None:
    """Identity basis for "full", None for "dmaps" (built by the caller), otherwise [g] read from a file"""
    if name == "full":
        return sampler.full_basis(n_d)
    if name == "dmaps":
        return None
    g = read_matrix(name)
    if g.shape[0] != n_d:
        raise InputError(f"Basis file {name} has {g.shape[0]} rows, training set has n_d={n_d}", path=name)
    return KernelBasis(kind="file", eigvals=np.ones(g.shape[1]), eigvecs=g, m=g.shape[1])


def handle(args: argparse.Namespace) -> int:
    for key, value in (("constraints", args.constraints), ("n_mch", args.n_mch), ("m0", args.m0)):
        if value is not None:
            args.set.append(f"plom.{key}={value}")
    cfg = load_run_config(args)
    store = open_store(args, cfg.run.output_dir)
    seeds = derived_seeds(cfg.run.seed)

    with stage("input"):
        pca, ts = load_input(cfg)
        model = gkde.build_model(ts)
    with stage("basis"):
        basis = resolve_basis(args.basis, ts.n_d)
        if basis is None:
            basis = kernels.dmaps_basis(ts, cfg.dmaps.jump_target)
    with stage("plom"):
        learned = sampler.learn(model, basis, plom_config(cfg.plom, model.bw.s_hat, seeds["rodb"]))
        reference = info_metrics.sample_set(ts.eta, cap=cfg.metrics.subsample_cap, seed=seeds["metrics"])
        metrics = selection.learned_metrics(
            learned, ts, reference, cap=cfg.metrics.subsample_cap, seed=seeds["metrics"]
        )

    store.write_matrix("learned/samples.bin", learned.eta_ar)
    if pca is not None:
        store.write_matrix("learned/samples_x.bin", data_model.reconstruct(pca, learned.eta_ar))
    if learned.err_trace:
        store.write_rows(
            "curves/constraints.csv",
            ["iteration", "err", "alpha"],
            [(i, e, a) for i, (e, a) in enumerate(zip(learned.err_trace, learned.alpha_trace), start=1)],
        )
    store.write_json(
        "plom.json",
        {
            "basis": learned.basis_kind,
            "m": basis.m,
            "n_ar": learned.n_ar,
            "converged": learned.converged,
            "i_last": learned.i_last,
            "lambda": learned.lam,
            **metrics,
        },
    )
    print(f"n_ar={learned.n_ar} basis={learned.basis_kind} m={basis.m}")
    print(f"d2={metrics['d2']:.6g} d2/nu={metrics['d2_over_nu']:.6g} KL={metrics['kl']:.6g} MI={metrics['mi']:.6g}")
    return EXIT_OK
