"""
GKDE estimators of Kullback-Leibler divergence, mutual information and entropy

Every estimator evaluates a Gaussian KDE with per-component scaling sigma_k
and Silverman bandwidth s at the sample points themselves. Pairwise sums are
computed in row blocks with a log-sum-exp per query point.
"""

import logging

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from plom.config import MI_SUBSAMPLE_CAP, PAIRWISE_BLOCK_ROWS
from plom.exceptions import DegenerateData, DegenerateEquation, DimensionMismatch, InputError, NonPositiveDenominator
from plom.models import SampleSet
from plom.parallel import map_blocks
from plom.rng import block_ranges, stream
from plom.services.gkde import silverman

logger = logging.getLogger(__name__)


def sample_set(x: np.ndarray, cap: int = MI_SUBSAMPLE_CAP, seed: int = 0) -> SampleSet:
    """Realizations (nu x N) with their sigmas and bandwidth, uniformly subsampled above cap"""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n_original = x.shape[1]
    if n_original < 2:
        raise InputError(f"estimators need at least 2 realizations, got {n_original}")
    if n_original > cap:
        picks = np.sort(stream(seed, "mi-subsample").choice(n_original, size=cap, replace=False))
        x = x[:, picks]
        logger.info(f"Subsampled {cap} of {n_original} realizations for the estimators")
    sigmas = x.std(axis=1, ddof=1)
    if np.any(sigmas <= 0):
        raise DegenerateData("A component has zero standard deviation", components=np.flatnonzero(sigmas <= 0).tolist())
    return SampleSet(x=x, sigmas=sigmas, s=silverman(x.shape[0], x.shape[1]), n_original=n_original)


def _log_sums(queries: np.ndarray, data: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """
    For every query column q: log sum_j exp(-1/2 sum_k ((q_k - x_kj) / scale_k)^2)
    """
    q = (queries / scale[:, None]).T
    d = (data / scale[:, None]).T

    def evaluate(block: tuple[int, int, int]) -> np.ndarray:
        _, start, stop = block
        return logsumexp(-0.5 * cdist(q[start:stop], d, "sqeuclidean"), axis=1)

    return np.concatenate(map_blocks(evaluate, block_ranges(q.shape[0], PAIRWISE_BLOCK_ROWS)))


def kl_divergence(px: SampleSet, py: SampleSet) -> float:
    """
    D(p_X || p_Y) estimated at the realizations of X.

    Numerator and denominator run through the same code path, so D(p, p) is exactly 0.
    """
    if px.nu != py.nu:
        raise DimensionMismatch(f"KL needs equal dimensions, got {px.nu} and {py.nu}")
    nu = px.nu
    offset = (
        nu * np.log(py.s / px.s)
        + np.log(py.n / px.n)
        + np.sum(np.log(py.sigmas)) - np.sum(np.log(px.sigmas))
    )
    own = _log_sums(px.x, px.x, px.s * px.sigmas)
    other = _log_sums(px.x, py.x, py.s * py.sigmas)
    return float(offset + np.mean(own - other))


def mutual_information(px: SampleSet) -> float:
    """
    I(X): mean log of the joint GKDE over the product of its marginals.

    All terms share the joint bandwidth s; normalization constants cancel.
    """
    if px.nu == 1:
        return 0.0
    scale = px.s * px.sigmas
    log_n = np.log(px.n)
    joint = _log_sums(px.x, px.x, scale) - log_n
    marginals = np.zeros(px.n)
    for k in range(px.nu):
        row = px.x[k : k + 1]
        marginals += _log_sums(row, row, scale[k : k + 1]) - log_n
    return float(np.mean(joint - marginals))


def entropy(px: SampleSet) -> float:
    """S_X = nu log(s sqrt(2 pi)) + sum log sigma_k - mean log((1/N) sum kernel)"""
    log_mean = _log_sums(px.x, px.x, px.s * px.sigmas) - np.log(px.n)
    return float(px.nu * np.log(px.s * np.sqrt(2.0 * np.pi)) + np.sum(np.log(px.sigmas)) - np.mean(log_mean))


def normalized_mi(i_hat: float, n_samp: int, chi: float) -> float:
    """I / (chi + log n)"""
    denominator = chi + np.log(n_samp)
    if denominator <= 0:
        raise NonPositiveDenominator(f"chi + log(n) = {denominator:.6g} is not positive", chi=chi, n=n_samp)
    return float(i_hat / denominator)


def solve_chi(i_h: float, i_tb_opt: float, n_d: int, n_ar: int) -> float:
    """
    chi making the normalized MI of the training set equal that of the
    optimal transient learned set:

        I_H / (chi + log n_d) = I_TB / (chi + log n_ar)
    """
    if n_ar <= n_d:
        raise InputError(f"solve_chi needs n_ar > n_d, got n_ar={n_ar}, n_d={n_d}")
    if i_h == i_tb_opt:
        raise DegenerateEquation("I(H) equals I(H_TB); chi is not determined", i_h=i_h)
    chi = (i_tb_opt * np.log(n_d) - i_h * np.log(n_ar)) / (i_h - i_tb_opt)
    if not chi_is_valid(chi, n_d):
        logger.warning(f"chi={chi:.6g} gives chi + log(n_d) <= 0")
    return float(chi)


def chi_is_valid(chi: float, n_d: int) -> bool:
    return bool(chi + np.log(n_d) > 0)
