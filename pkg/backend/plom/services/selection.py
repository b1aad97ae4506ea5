"""Comparison of transient bases against the DMAPS basis and choice of n_opt"""

import logging
from collections.abc import Callable, Mapping

import numpy as np
from scipy import linalg

from plom.config import ANGLE_METHOD, DEFAULT_TAU_C, MI_SUBSAMPLE_CAP
from plom.exceptions import (
    DegenerateEquation,
    DimensionMismatch,
    EmptyAdmissibleSet,
    InputError,
    NonPositiveDenominator,
    RankDeficient,
    ShapeMismatch,
)
from plom.models import (
    GkdeModel,
    InstantRecord,
    KernelBasis,
    LearnedSet,
    OrderingFlag,
    PlomConfig,
    SampleSet,
    SelectionReport,
    TrainingSet,
)
from plom.rng import derive_seed
from plom.services import info_metrics, sampler

logger = logging.getLogger(__name__)


def subspace_angle(ga: KernelBasis, gb: KernelBasis, method: str = ANGLE_METHOD) -> float:
    """
    Angle in degrees between the spans of two reduced bases.

    principal: largest principal angle of the spans (orthonormalized first),
        so the angle of a basis with itself is 0 and rescaling columns changes nothing.
    normalized: arccos of the smallest singular value of the cross-Gram of the
        column-normalized bases, computed literally.

    principal is the default (ANGLE_METHOD). The literal form only measures the
    angle between spans when the columns are orthonormal; the kernel bases
    g = B^{-1/2} phi are not, so it gives a nonzero angle for a basis against
    itself. Select normalized through [selection] angle_method to reproduce it.
    """
    a, b = ga.eigvecs, gb.eigvecs
    if a.shape != b.shape:
        raise DimensionMismatch(f"bases have shapes {a.shape} and {b.shape}")
    m = a.shape[1]
    a_hat = a / np.linalg.norm(a, axis=0)
    b_hat = b / np.linalg.norm(b, axis=0)
    for name, matrix in (("first", a_hat), ("second", b_hat)):
        rank = int(np.linalg.matrix_rank(matrix))
        if rank < m:
            raise RankDeficient(f"The {name} basis has numerical rank {rank} < {m}", rank=rank, m=m)

    if method == "principal":
        return float(np.degrees(np.max(linalg.subspace_angles(a_hat, b_hat))))
    if method == "normalized":
        sigma_min = np.linalg.svd(a_hat.T @ b_hat, compute_uv=False).min()
        return float(np.degrees(np.arccos(np.clip(sigma_min, 0.0, 1.0))))
    raise InputError(f"Unknown angle method {method!r}")


def _learned_matrices(learned: LearnedSet | np.ndarray, n_d: int) -> np.ndarray:
    if isinstance(learned, LearnedSet):
        return learned.matrices(n_d)
    array = np.asarray(learned, dtype=float)
    if array.ndim == 2:
        if array.shape[1] % n_d:
            raise ShapeMismatch(f"{array.shape[1]} learned columns are not a multiple of n_d={n_d}")
        return array.reshape(array.shape[0], -1, n_d).transpose(1, 0, 2)
    return array


def concentration(learned: LearnedSet | np.ndarray, ts: TrainingSet) -> float:
    """d^2 = mean_l ||[eta_ar^l] - [eta_d]||_F^2 / ||[eta_d]||_F^2"""
    matrices = _learned_matrices(learned, ts.n_d)
    if matrices.ndim != 3 or matrices.shape[1:] != ts.eta.shape:
        raise ShapeMismatch(f"learned matrices {matrices.shape[1:]} do not match the training set {ts.eta.shape}")
    distances = np.sum((matrices - ts.eta[None]) ** 2, axis=(1, 2))
    return float(np.mean(distances) / np.sum(ts.eta**2))


def admissible_set(d2_curve: Mapping[int, float], nu: int, tau_c: float = DEFAULT_TAU_C) -> list[int]:
    """Instants n with d^2(n)/nu <= tau_c"""
    if tau_c <= 0:
        raise InputError(f"tau_c must be positive, got {tau_c}")
    admissible = [n for n in sorted(d2_curve) if d2_curve[n] / nu <= tau_c]
    if not admissible:
        raise EmptyAdmissibleSet(f"No instant satisfies d2/nu <= {tau_c}", tau_c=tau_c)
    return admissible


def select_optimal(mi_curve: Mapping[int, float]) -> int:
    """argmin of the MI curve, ties toward the smaller n"""
    if not mi_curve:
        raise EmptyAdmissibleSet("No admissible instant to select from")
    return min(sorted(mi_curve), key=lambda n: mi_curve[n])


def ordering_flag(i_h: float, i_tb_opt: float | None, i_db: float) -> OrderingFlag:
    """Whether I(H) < I(H_DB) holds, and whether the transient basis improves on it"""
    if not i_h < i_db:
        return OrderingFlag.ASSUMPTION_FAILED
    if i_tb_opt is not None and i_h <= i_tb_opt < i_db:
        return OrderingFlag.HOLDS
    return OrderingFlag.NOT_IMPROVED


def learned_metrics(
    learned: LearnedSet,
    ts: TrainingSet,
    reference: SampleSet,
    cap: int = MI_SUBSAMPLE_CAP,
    seed: int = 0,
) -> dict[str, float]:
    """d^2, KL(learned || training), entropy and MI of a learned set"""
    samples = info_metrics.sample_set(learned.eta_ar, cap=cap, seed=seed)
    d2 = concentration(learned, ts)
    return {
        "d2": d2,
        "d2_over_nu": d2 / ts.nu,
        "kl": info_metrics.kl_divergence(samples, reference),
        "entropy": info_metrics.entropy(samples),
        "mi": info_metrics.mutual_information(samples),
    }


def evaluate_instants(
    model: GkdeModel,
    bases: Mapping[int, KernelBasis],
    dmaps: KernelBasis,
    cfg: PlomConfig,
    tau_c: float = DEFAULT_TAU_C,
    cap: int = MI_SUBSAMPLE_CAP,
    angle_method: str = ANGLE_METHOD,
    progress_callback: Callable[[int, int], None] | None = None,
) -> tuple[list[InstantRecord], dict[int, LearnedSet]]:
    """
    Run PLoM with the transient basis of every instant and measure it.

    Instants run one after the other; the generator parallelizes its restarts.
    """
    ts = model.ts
    reference = info_metrics.sample_set(ts.eta, cap=cap, seed=cfg.seed)
    records = []
    learned_sets = {}
    instants = sorted(bases)
    for position, n in enumerate(instants, start=1):
        basis = bases[n]
        run_cfg = cfg.model_copy(update={"seed": derive_seed(cfg.seed, "rotb", n)})
        learned = sampler.learn(model, basis, run_cfg)
        metrics = learned_metrics(learned, ts, reference, cap=cap, seed=cfg.seed)
        record = InstantRecord(
            n=n,
            t=basis.t,
            gamma_deg=subspace_angle(basis, dmaps, method=angle_method),
            admissible=metrics["d2_over_nu"] <= tau_c,
            n_negative=basis.n_negative,
            **metrics,
        )
        records.append(record)
        learned_sets[n] = learned
        logger.info(
            f"n={n}: gamma={record.gamma_deg:.2f} deg, d2/nu={record.d2_over_nu:.4g}, "
            f"KL={record.kl:.4f}, MI={record.mi:.4f}"
        )
        if progress_callback:
            progress_callback(position, len(instants))
    return records, learned_sets


def summarize(
    records: list[InstantRecord],
    nu: int,
    n_d: int,
    n_ar: int,
    mi_h: float,
    mi_db: float,
    tau_c: float = DEFAULT_TAU_C,
    angle_method: str = ANGLE_METHOD,
    cap: int = MI_SUBSAMPLE_CAP,
) -> SelectionReport:
    """
    Admissible set, n_opt, chi and the normalized MI values.

    An empty admissible set is reported with fell_back_to_dmaps=True.
    """
    d2_curve = {record.n: record.d2 for record in records}
    mi_curve = {record.n: record.mi for record in records}
    report: dict = {"records": records, "tau_c": tau_c, "angle_method": angle_method, "mi_subsample_cap": cap}
    report.update(mi_h=mi_h, mi_db=mi_db)

    try:
        admissible = admissible_set(d2_curve, nu, tau_c)
    except EmptyAdmissibleSet as e:
        logger.warning(f"{e.message}; falling back to the DMAPS basis")
        report.update(admissible=[], fell_back_to_dmaps=True, ordering=ordering_flag(mi_h, None, mi_db))
        return SelectionReport(**report)

    n_opt = select_optimal({n: mi_curve[n] for n in admissible})
    mi_tb = mi_curve[n_opt]
    report.update(admissible=admissible, n_opt=n_opt, mi_tb_opt=mi_tb, ordering=ordering_flag(mi_h, mi_tb, mi_db))
    if report["ordering"] != OrderingFlag.HOLDS:
        logger.warning(f"MI ordering: {report['ordering'].value} (I_H={mi_h:.4f}, I_TB={mi_tb:.4f}, I_DB={mi_db:.4f})")

    try:
        chi = info_metrics.solve_chi(mi_h, mi_tb, n_d, n_ar)
        report.update(
            chi_opt=chi,
            chi_valid=info_metrics.chi_is_valid(chi, n_d),
            mi_norm_h=info_metrics.normalized_mi(mi_h, n_d, chi),
            mi_norm_tb_opt=info_metrics.normalized_mi(mi_tb, n_ar, chi),
            mi_norm_db=info_metrics.normalized_mi(mi_db, n_ar, chi),
        )
    except (DegenerateEquation, NonPositiveDenominator, InputError) as e:
        logger.warning(f"Normalized MI unavailable: {e.message}")

    logger.info(f"Selection: admissible={admissible}, n_opt={n_opt}, chi={report.get('chi_opt')}")
    return SelectionReport(**report)
