"""
Full PLoM run: data -> bases -> selection -> learned sets -> artifacts

Stages run one after the other; each delegates its parallelism to the
service it calls. A failing stage tags its error with the stage name so the
command layer can write it into error.json.
"""

import logging
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from typing import Any

import numpy as np
import scipy
from pydantic import ValidationError

import plom
from plom.config import SCHEMA_VERSION
from plom.demo.generator import generate, preset
from plom.exceptions import InputError, PlomError
from plom.models import (
    ArrayModel,
    GkdeModel,
    IsdeConfig,
    IsdeTrajectorySet,
    KernelBasis,
    KernelMatrix,
    LearnedSet,
    PcaReduction,
    PlomConfig,
    PlomSection,
    RunConfig,
    SelectionReport,
    TrainingSet,
)
from plom.parallel import get_thread_cap
from plom.rng import derive_seed
from plom.services import data_model, gkde, info_metrics, isde, kernels, sampler, selection
from plom.storage import ArtifactStore

logger = logging.getLogger(__name__)


class BasesStage(ArrayModel):
    """Everything computed before PLoM runs"""

    pca: PcaReduction | None
    model: GkdeModel
    dmaps: KernelBasis
    traj: IsdeTrajectorySet
    matrices: dict[int, KernelMatrix]
    bases: dict[int, KernelBasis]
    angles: dict[int, float]


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Log the stage and tag any library error raised inside it"""
    logger.info(f"Stage: {name}")
    try:
        yield
    except PlomError as e:
        if e.stage is None:
            e.stage = name
        raise


def derived_seeds(seed: int) -> dict[str, int]:
    labels = ["preset", "isde", "baseline", "rodb", "rotb", "metrics"]
    return {label: derive_seed(seed, label) for label in labels}


def load_input(cfg: RunConfig) -> tuple[PcaReduction | None, TrainingSet]:
    """Training set from a preset or a file"""
    if cfg.input.preset is not None:
        try:
            spec = preset(cfg.input.preset, seed=derive_seed(cfg.run.seed, "preset"))
        except KeyError as e:
            raise InputError(str(e.args[0]), preset=cfg.input.preset) from e
        return None, generate(spec)
    assert cfg.input.path is not None
    return data_model.load_training_set(cfg.input.path, cfg.input.format, cfg.pca.eps_pca, cfg.pca.skip)


def plom_config(section: PlomSection, s_hat: float, seed: int) -> PlomConfig:
    """Sampler configuration for one regime; dt_sv defaults to 2 pi s_hat / 20"""
    values = section.model_dump(exclude={"dt_sv"})
    dt_sv = section.dt_sv if section.dt_sv is not None else sampler.default_dt_sv(s_hat)
    try:
        return PlomConfig(dt_sv=dt_sv, s_hat=s_hat, seed=seed, **values)
    except ValidationError as e:
        error = e.errors()[0]
        raise InputError(f"Invalid [plom] section: {error['msg']}", field=".".join(map(str, error["loc"]))) from e


def compute_bases(cfg: RunConfig, progress_callback: Callable[[int, int], None] | None = None) -> BasesStage:
    """Training set, GKDE, DMAPS basis, ISDE and the connected transient basis of every instant"""
    with stage("input"):
        pca, ts = load_input(cfg)
    with stage("gkde"):
        model = gkde.build_model(ts)
    with stage("dmaps"):
        dmaps = kernels.dmaps_basis(ts, cfg.dmaps.jump_target)
    with stage("isde"):
        isde_cfg = IsdeConfig.from_bandwidths(
            model.bw,
            kappa=cfg.isde.kappa,
            n_s=cfg.isde.n_s,
            n_instants=cfg.isde.n_instants,
            n_mc=cfg.isde.n_mc,
            seed=derive_seed(cfg.run.seed, "isde"),
        )
        traj = isde.simulate(model, isde_cfg, progress_callback=progress_callback)
    with stage("kernels"):
        assert dmaps.eps_dm is not None
        instants = list(range(1, isde_cfg.n_instants + 1))
        matrices = kernels.transient_connected_matrices(ts, traj, instants, dmaps.eps_dm)
        bases = kernels.transient_bases(matrices, dmaps.m)
        angles = {
            n: selection.subspace_angle(basis, dmaps, method=cfg.selection.angle_method) for n, basis in bases.items()
        }
    return BasesStage(pca=pca, model=model, dmaps=dmaps, traj=traj, matrices=matrices, bases=bases, angles=angles)


def _regime_summary(learned: LearnedSet, metrics: dict[str, float], n: int | None = None) -> dict[str, Any]:
    return {
        "n": n,
        "n_ar": learned.n_ar,
        "basis": learned.basis_kind,
        "converged": learned.converged,
        "i_last": learned.i_last,
        "final_err": learned.err_trace[-1] if learned.err_trace else None,
        **metrics,
    }


def run_pipeline(
    cfg: RunConfig,
    store: ArtifactStore,
    progress_callback: Callable[[str, int, int], None] | None = None,
) -> dict[str, Any]:
    """
    Run every stage and write the artifact tree.

    Returns:
        The run.json payload
    """

    def report_progress(name: str) -> Callable[[int, int], None] | None:
        if progress_callback is None:
            return None
        return lambda done, total: progress_callback(name, done, total)

    seeds = derived_seeds(cfg.run.seed)
    stages = compute_bases(cfg, progress_callback=report_progress("isde"))
    model, ts = stages.model, stages.model.ts
    cap = cfg.metrics.subsample_cap

    with stage("plom"):
        reference = info_metrics.sample_set(ts.eta, cap=cap, seed=seeds["metrics"])
        regimes = {}
        learned_sets = {}
        for name, basis in (("baseline", sampler.full_basis(ts.n_d)), ("rodb", stages.dmaps)):
            learned = sampler.learn(model, basis, plom_config(cfg.plom, model.bw.s_hat, seeds[name]))
            metrics = selection.learned_metrics(learned, ts, reference, cap=cap, seed=seeds["metrics"])
            regimes[name] = _regime_summary(learned, metrics)
            learned_sets[name] = learned

    with stage("selection"):
        rotb_cfg = plom_config(cfg.plom, model.bw.s_hat, seeds["rotb"])
        records, rotb_sets = selection.evaluate_instants(
            model,
            stages.bases,
            stages.dmaps,
            rotb_cfg,
            tau_c=cfg.selection.tau_c,
            cap=cap,
            angle_method=cfg.selection.angle_method,
            progress_callback=report_progress("selection"),
        )
        mi_h = info_metrics.mutual_information(reference)
        report = selection.summarize(
            records,
            nu=ts.nu,
            n_d=min(ts.n_d, cap),
            n_ar=min(learned_sets["rodb"].n_ar, cap),
            mi_h=mi_h,
            mi_db=regimes["rodb"]["mi"],
            tau_c=cfg.selection.tau_c,
            angle_method=cfg.selection.angle_method,
            cap=cap,
        )
        n_rotb = report.n_opt
        if n_rotb is not None:
            learned_sets["rotb"] = rotb_sets[n_rotb]
            record = next(r for r in records if r.n == n_rotb)
            regimes["rotb"] = _regime_summary(
                rotb_sets[n_rotb],
                {key: getattr(record, key) for key in ("d2", "d2_over_nu", "kl", "entropy", "mi")},
                n=n_rotb,
            )
        else:
            learned_sets["rotb"] = learned_sets["rodb"]
            regimes["rotb"] = {**regimes["rodb"], "fell_back_to_dmaps": True}

    with stage("artifacts"):
        payload = run_payload(cfg, stages, report, regimes, seeds)
        write_artifacts(store, stages, report, learned_sets)
        store.write_json("run.json", payload)
    logger.info(f"Run written to {store.root}")
    return payload


def run_payload(
    cfg: RunConfig,
    stages: BasesStage,
    report: SelectionReport,
    regimes: dict[str, dict[str, Any]],
    seeds: dict[str, int],
) -> dict[str, Any]:
    model, dmaps, traj = stages.model, stages.dmaps, stages.traj
    ybar, sbar = isde.convergence_curves(traj)
    return {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.model_dump(mode="json", exclude={"run": {"output_dir"}}),
        "training": {
            "nu": model.nu,
            "n_d": model.n_d,
            "pca_err": stages.pca.err if stages.pca is not None else None,
            "n_x": int(stages.pca.mean.size) if stages.pca is not None else None,
        },
        "gkde": {"s": model.bw.s, "s_hat": model.bw.s_hat, "ratio": model.bw.ratio},
        "dmaps": {"eps_opt": dmaps.eps_dm, "m_opt": dmaps.m, "jump": dmaps.jump, "jump_ok": dmaps.jump_ok},
        "isde": {
            "delta_t": traj.cfg.delta_t,
            "kappa": traj.cfg.kappa,
            "n_s": traj.cfg.n_s,
            "n_instants": traj.n_instants,
            "n_mc": traj.cfg.n_mc,
            "ybar_final": float(ybar[-1]),
            "sbar_final": float(sbar[-1]),
        },
        "selection": report.model_dump(mode="json"),
        "regimes": regimes,
        "provenance": {
            "package_version": plom.__version__,
            "numpy_version": np.__version__,
            "scipy_version": scipy.__version__,
            "seed": cfg.run.seed,
            "derived_seeds": seeds,
            "mi_subsample_cap": cfg.metrics.subsample_cap,
            "runtime": {"thread_cap": get_thread_cap()},
        },
    }


def write_bases(store: ArtifactStore, stages: BasesStage) -> None:
    """Basis matrices and the per-instant angle and eigenvalue series"""
    store.write_matrix("bases/dmaps.bin", stages.dmaps.eigvecs)
    store.write_rows(
        "curves/dmaps_eigenvalues.csv", ["alpha", "eigenvalue"], enumerate(stages.dmaps.eigvals.tolist(), start=1)
    )
    rows = []
    for n, basis in sorted(stages.bases.items()):
        store.write_matrix(f"bases/transient_{n:04d}.bin", basis.eigvecs)
        rows.extend((n, basis.t, alpha, value) for alpha, value in enumerate(basis.eigvals.tolist(), start=1))
    store.write_rows("curves/transient_eigenvalues.csv", ["n", "t", "alpha", "eigenvalue"], rows)
    store.write_rows(
        "curves/angles.csv",
        ["n", "t", "gamma_deg", "n_negative"],
        [(n, stages.bases[n].t, angle, stages.bases[n].n_negative) for n, angle in sorted(stages.angles.items())],
    )
    ybar, sbar = isde.convergence_curves(stages.traj)
    store.write_rows(
        "curves/convergence.csv",
        ["n", "t", "ybar", "sbar"],
        [(n, stages.traj.time(n), ybar[n - 1], sbar[n - 1]) for n in range(1, stages.traj.n_instants + 1)],
    )


def write_artifacts(
    store: ArtifactStore,
    stages: BasesStage,
    report: SelectionReport,
    learned_sets: dict[str, LearnedSet],
) -> None:
    write_bases(store, stages)
    columns = ["n", "t", "gamma_deg", "d2", "d2_over_nu", "kl", "entropy", "mi", "admissible", "n_negative"]
    store.write_rows(
        "curves/instants.csv",
        columns,
        [[getattr(record, column) for column in columns] for record in report.records],
    )
    for name, learned in learned_sets.items():
        store.write_matrix(f"learned/{name}.bin", learned.eta_ar)
        if stages.pca is not None:
            store.write_matrix(f"learned/{name}_x.bin", data_model.reconstruct(stages.pca, learned.eta_ar))
        if learned.err_trace:
            store.write_rows(
                f"curves/constraints_{name}.csv",
                ["iteration", "err", "alpha"],
                [(i, err, alpha) for i, (err, alpha) in enumerate(zip(learned.err_trace, learned.alpha_trace), 1)],
            )
