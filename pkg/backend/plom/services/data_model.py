"""Dataset ingestion, PCA reduction and the normalization contract"""

import logging
from pathlib import Path

import numpy as np
from pydantic import ValidationError
from scipy import linalg

from plom.config import COVARIANCE_TOLERANCE, EIGEN_CUTOFF, MEAN_TOLERANCE
from plom.exceptions import DegenerateData, InputError, RankDeficient, ShapeMismatch
from plom.models import NormalizationDiagnostics, PcaReduction, RawDataset, TrainingSet
from plom.storage import read_matrix

logger = logging.getLogger(__name__)


def pca_reduce(raw: RawDataset, eps_pca: float) -> tuple[PcaReduction, TrainingSet]:
    """
    Reduce X to the normalized vector H.

    nu is the smallest dimension with err_X(nu) <= eps_pca, where
    err_X(nu) = 1 - sum(zeta[:nu]) / trace(C). Eigenvalues below
    EIGEN_CUTOFF * max(zeta) never enter the reduction.

    Returns:
        (PcaReduction, TrainingSet) with eta = zeta^{-1/2} phi^T (x - mean)
    """
    if not 0.0 < eps_pca < 1.0:
        raise InputError(f"eps_pca must lie in (0, 1), got {eps_pca}", eps_pca=eps_pca)

    x = raw.x
    mean = x.mean(axis=1)
    cov = np.atleast_2d(np.cov(x, ddof=1))
    eigvals, eigvecs = linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]

    scale = max(1.0, float(np.max(np.abs(x))) ** 2)
    if eigvals[0] <= np.finfo(float).eps * scale:
        raise DegenerateData("All covariance eigenvalues vanish (constant dataset)", n_x=raw.n_x, n_d=raw.n_d)

    usable = int(np.sum(eigvals > EIGEN_CUTOFF * eigvals[0]))
    total = float(np.trace(cov))
    err_curve = np.clip(1.0 - np.cumsum(eigvals[:usable]) / total, 0.0, 1.0)
    within = np.flatnonzero(err_curve <= eps_pca)
    nu = int(within[0]) + 1 if within.size else usable
    if nu == 0:
        raise RankDeficient("PCA retained no component", eps_pca=eps_pca)

    zeta = eigvals[:nu]
    phi = eigvecs[:, :nu]
    eta = (phi.T @ (x - mean[:, None])) / np.sqrt(zeta)[:, None]

    pca = PcaReduction(mean=mean, eigvals=zeta, eigvecs=phi, nu=nu, err=float(err_curve[nu - 1]))
    logger.info(f"PCA: n_x={raw.n_x}, n_d={raw.n_d} -> nu={nu}, err_X={pca.err:.3e}")
    return pca, TrainingSet(eta=eta)


def energy_errors(raw: RawDataset) -> np.ndarray:
    """err_X(nu) for every nu, non-increasing"""
    cov = np.atleast_2d(np.cov(raw.x, ddof=1))
    eigvals = np.sort(linalg.eigvalsh(cov))[::-1]
    return np.clip(1.0 - np.cumsum(eigvals) / np.trace(cov), 0.0, 1.0)


def reconstruct(pca: PcaReduction, eta: np.ndarray) -> np.ndarray:
    """Map realizations of H back to X: x = mean + phi zeta^{1/2} eta"""
    eta = np.atleast_2d(eta)
    if eta.shape[0] != pca.nu:
        raise ShapeMismatch(f"eta has {eta.shape[0]} rows, PCA has nu={pca.nu}")
    return pca.mean[:, None] + pca.eigvecs @ (np.sqrt(pca.eigvals)[:, None] * eta)


def whiten(x: np.ndarray) -> TrainingSet:
    """Symmetric whitening C^{-1/2}(x - mean), keeps every dimension and its orientation"""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    centred = x - x.mean(axis=1, keepdims=True)
    cov = np.atleast_2d(np.cov(x, ddof=1))
    eigvals, eigvecs = linalg.eigh(cov)
    if eigvals.min() <= EIGEN_CUTOFF * max(eigvals.max(), 0.0) or eigvals.max() <= 0:
        raise DegenerateData("Covariance is singular, cannot whiten", n_x=x.shape[0], n_d=x.shape[1])
    inverse_root = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T
    return TrainingSet(eta=inverse_root @ centred)


def validate_normalization(ts: TrainingSet) -> NormalizationDiagnostics:
    """Empirical mean norm and covariance deviation from the identity"""
    mean_norm = float(np.linalg.norm(ts.eta.mean(axis=1)))
    if ts.n_d < 2:
        cov_dev = float("inf")
    else:
        cov = np.atleast_2d(np.cov(ts.eta, ddof=1))
        cov_dev = float(np.linalg.norm(cov - np.eye(ts.nu), "fro"))
    return NormalizationDiagnostics(
        mean_norm=mean_norm,
        cov_dev=cov_dev,
        mean_ok=mean_norm <= MEAN_TOLERANCE,
        cov_ok=cov_dev <= COVARIANCE_TOLERANCE,
    )


def load_raw(path: str | Path, fmt: str = "auto") -> RawDataset:
    matrix = read_matrix(path, fmt)
    try:
        return RawDataset(x=matrix)
    except ValidationError as e:
        raise InputError(f"Invalid dataset in {path}: {e.errors()[0]['msg']}", path=path) from e


def load_training_set(
    path: str | Path,
    fmt: str = "auto",
    eps_pca: float = 1e-6,
    skip_pca: bool = False,
) -> tuple[PcaReduction | None, TrainingSet]:
    """
    Load a dataset and bring it to normalized form

    With skip_pca the file already holds [eta_d]; its normalization is checked
    and a warning is logged when it fails.
    """
    if not skip_pca:
        return pca_reduce(load_raw(path, fmt), eps_pca)

    matrix = read_matrix(path, fmt)
    try:
        ts = TrainingSet(eta=matrix)
    except ValidationError as e:
        raise InputError(f"Invalid training set in {path}: {e.errors()[0]['msg']}", path=path) from e
    diagnostics = validate_normalization(ts)
    if not diagnostics.passed:
        logger.warning(
            f"Training set {path} is not normalized: |mean|={diagnostics.mean_norm:.3e}, "
            f"|C-I|_F={diagnostics.cov_dev:.3e}"
        )
    logger.info(f"Loaded training set nu={ts.nu}, n_d={ts.n_d} from {path}")
    return None, ts
