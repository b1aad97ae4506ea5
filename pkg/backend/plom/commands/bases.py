"""`plom bases`: DMAPS and transient bases with their angle curve, no sampling"""

import argparse
import logging

from plom.commands.common import add_input_arguments, load_run_config, open_store
from plom.exceptions import EXIT_OK
from plom.services import kernels
from plom.services.pipeline import compute_bases, stage, write_bases

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("bases", help="Stop after the bases and the angle curve")
    add_input_arguments(parser)
    parser.add_argument("--n", type=int, dest="n_instants", help="Number of retained instants N")
    parser.add_argument("--kappa", type=float, help="Step ratio, delta_t = s_hat^2 / kappa")
    parser.add_argument("--n-mc", type=int, help="ISDE realizations")
    parser.add_argument(
        "--sweep", type=float, nargs="+", metavar="KAPPA", help="Also compare K_tilde(delta_t) with K_DM over kappas"
    )
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    for key, value in (("n_instants", args.n_instants), ("kappa", args.kappa), ("n_mc", args.n_mc)):
        if value is not None:
            args.set.append(f"isde.{key}={value}")
    cfg = load_run_config(args)
    store = open_store(args, cfg.run.output_dir)

    stages = compute_bases(cfg)
    with stage("artifacts"):
        write_bases(store, stages)
        payload = {
            "nu": stages.model.nu,
            "n_d": stages.model.n_d,
            "eps_opt": stages.dmaps.eps_dm,
            "m_opt": stages.dmaps.m,
            "jump": stages.dmaps.jump,
            "jump_ok": stages.dmaps.jump_ok,
            "delta_t": stages.traj.cfg.delta_t,
            "kappa": stages.traj.cfg.kappa,
            "angle_method": cfg.selection.angle_method,
            "angles": [{"n": n, "t": stages.bases[n].t, "gamma_deg": a} for n, a in sorted(stages.angles.items())],
        }

    if args.sweep:
        with stage("kappa-sweep"):
            assert stages.dmaps.eps_dm is not None
            rows = kernels.kappa_sweep(
                stages.model,
                args.sweep,
                n_mc=cfg.isde.n_mc,
                seed=stages.traj.cfg.seed,
                eps_dm=stages.dmaps.eps_dm,
                angle_method=cfg.selection.angle_method,
            )
            store.write_rows(
                "curves/kappa_sweep.csv",
                ["kappa", "delta_t", "distance", "angle_deg"],
                [[row[key] for key in ("kappa", "delta_t", "distance", "angle_deg")] for row in rows],
            )
            payload["kappa_sweep"] = rows

    store.write_json("bases.json", payload)
    for entry in payload["angles"]:
        print(f"n={entry['n']:4d} t={entry['t']:.6g} gamma={entry['gamma_deg']:.4f} deg")
    print(f"Artifacts in {store.root}")
    return EXIT_OK
