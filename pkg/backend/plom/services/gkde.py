"""Gaussian KDE model of the training measure"""

import logging

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp, softmax

from plom.config import KERNEL_CHUNK_ENTRIES
from plom.exceptions import DimensionMismatch, InputError
from plom.models import BandwidthSet, GkdeModel, TrainingSet
from plom.parallel import map_blocks
from plom.rng import block_ranges

logger = logging.getLogger(__name__)


def silverman(nu: int, count: int) -> float:
    """Silverman bandwidth (4 / (count (2 + nu)))^(1 / (nu + 4))"""
    return float((4.0 / (count * (2.0 + nu))) ** (1.0 / (nu + 4.0)))


def bandwidths(nu: int, n_d: int) -> BandwidthSet:
    """Silverman bandwidth s and the modified s_hat that keeps the covariance at identity"""
    if nu < 1 or n_d < 2:
        raise InputError(f"bandwidths need nu >= 1 and n_d >= 2, got nu={nu}, n_d={n_d}")
    s = silverman(nu, n_d)
    s_hat = s / np.sqrt(s**2 + (n_d - 1.0) / n_d)
    return BandwidthSet(s=s, s_hat=float(s_hat), ratio=float(s_hat / s))


def build_model(ts: TrainingSet) -> GkdeModel:
    bw = bandwidths(ts.nu, ts.n_d) if ts.n_d >= 2 else _single_column_bandwidths(ts.nu)
    logger.info(f"GKDE: nu={ts.nu}, n_d={ts.n_d}, s={bw.s:.4f}, s_hat={bw.s_hat:.4f}")
    return GkdeModel(ts=ts, bw=bw)


def _single_column_bandwidths(nu: int) -> BandwidthSet:
    # n_d = 1: (n_d - 1)/n_d vanishes and s_hat = 1
    s = silverman(nu, 1)
    return BandwidthSet(s=s, s_hat=1.0, ratio=1.0 / s)


def _as_points(model: GkdeModel, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[0] != model.nu:
        raise DimensionMismatch(f"points have {points.shape[0]} rows, model has nu={model.nu}")
    return points


def _chunks(model: GkdeModel, count: int) -> list[tuple[int, int, int]]:
    rows = max(1, KERNEL_CHUNK_ENTRIES // max(1, model.n_d))
    return block_ranges(count, rows)


def _exponents(model: GkdeModel, points: np.ndarray) -> np.ndarray:
    """-||c_j - y||^2 / (2 s_hat^2), one row per point"""
    d2 = cdist(points.T, model.centres.T, "sqeuclidean")
    return -d2 / (2.0 * model.bw.s_hat**2)


def log_normalizer(model: GkdeModel) -> float:
    """log c_nu = -nu log(sqrt(2 pi) s_hat)"""
    return float(-model.nu * np.log(np.sqrt(2.0 * np.pi) * model.bw.s_hat))


def log_pdf_points(model: GkdeModel, points: np.ndarray, parallel: bool = True) -> np.ndarray:
    """log p_H at every column of points"""
    points = _as_points(model, points)
    offset = log_normalizer(model) - np.log(model.n_d)

    def evaluate(chunk: tuple[int, int, int]) -> np.ndarray:
        _, start, stop = chunk
        return logsumexp(_exponents(model, points[:, start:stop]), axis=1) + offset

    chunks = _chunks(model, points.shape[1])
    parts = map_blocks(evaluate, chunks) if parallel else [evaluate(chunk) for chunk in chunks]
    return np.concatenate(parts) if parts else np.empty(0)


def log_pdf(model: GkdeModel, eta: np.ndarray) -> float:
    """log p_H(eta) = log c_nu - Phi(eta), log-sum-exp stabilized"""
    return float(log_pdf_points(model, eta)[0])


def pdf(model: GkdeModel, eta: np.ndarray) -> float:
    return float(np.exp(log_pdf(model, eta)))


def potential(model: GkdeModel, eta: np.ndarray) -> float:
    """Phi(eta) = -log xi(eta)"""
    return log_normalizer(model) - log_pdf(model, eta)


def grad_log_pdf_points(model: GkdeModel, points: np.ndarray, parallel: bool = True) -> np.ndarray:
    """
    Gradient of log p_H at every column of points.

    Uses softmax weights w_j over the centres:
    grad = sum_j w_j (c_j - y) / s_hat^2
    """
    points = _as_points(model, points)
    centres_t = model.centres.T
    s_hat2 = model.bw.s_hat**2

    def evaluate(chunk: tuple[int, int, int]) -> np.ndarray:
        _, start, stop = chunk
        block = points[:, start:stop]
        weights = softmax(_exponents(model, block), axis=1)
        return (weights @ centres_t - block.T).T / s_hat2

    chunks = _chunks(model, points.shape[1])
    parts = map_blocks(evaluate, chunks) if parallel else [evaluate(chunk) for chunk in chunks]
    return np.concatenate(parts, axis=1) if parts else np.empty((model.nu, 0))


def grad_log_pdf_matrix(model: GkdeModel, u: np.ndarray) -> np.ndarray:
    """[L(u)], column j is grad log p_H(u^j)"""
    return grad_log_pdf_points(model, u)


def drift(model: GkdeModel, y: np.ndarray) -> np.ndarray:
    """ISDE drift b(y) = grad(xi)/(2 xi)"""
    return 0.5 * grad_log_pdf_points(model, y)[:, 0]


def sample_mixture(model: GkdeModel, count: int, rng: np.random.Generator) -> np.ndarray:
    """Exact draws from p_H: uniform centre plus isotropic s_hat noise"""
    picks = rng.integers(model.n_d, size=count)
    noise = rng.standard_normal((model.nu, count))
    return model.centres[:, picks] + model.bw.s_hat * noise
