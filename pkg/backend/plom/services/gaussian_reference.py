"""
Ornstein-Uhlenbeck oracle for the one-dimensional Gaussian case

The ISDE with a standard normal invariant measure is dY = -Y/2 dt + dW.
Its Fokker-Planck operator has eigenvalues alpha/2 with normalized Hermite
eigenfunctions, and the transition kernel has the Mehler expansion.
"""

import logging
from collections.abc import Callable, Sequence
from typing import Any

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import special, stats

from plom.config import (
    QUADRATURE_NODES,
    REFERENCE_DELTA_T,
    REFERENCE_INSTANT,
    REFERENCE_N_INSTANTS,
    REFERENCE_ND_GRID,
    REFERENCE_ORDERS,
)
from plom.demo.generator import generate
from plom.exceptions import InputError
from plom.models import GeneratorKind, GeneratorSpec, IsdeConfig
from plom.rng import derive_seed
from plom.services import gkde, isde, kernels
from plom.services.gkde import silverman

logger = logging.getLogger(__name__)


def ou_moments(x: float | np.ndarray, t: float) -> tuple[Any, float]:
    """Mean x e^{-t/2} and standard deviation sqrt(1 - e^{-t})"""
    if t < 0:
        raise InputError(f"t must be non-negative, got {t}")
    return x * np.exp(-0.5 * t), float(np.sqrt(-np.expm1(-t)))


def ou_transition_pdf(y: float | np.ndarray, t: float, x: float | np.ndarray) -> Any:
    """Transition density rho(y, t | x, 0)"""
    if t <= 0:
        raise InputError(f"transition density needs t > 0, got {t}")
    mean, sigma = ou_moments(x, t)
    return stats.norm.pdf(y, loc=mean, scale=sigma)


def ou_kernel(y: float | np.ndarray, x: float | np.ndarray, t: float) -> Any:
    """k_t(y, x) = rho(y, t | x, 0) / p_H(y)"""
    return ou_transition_pdf(y, t, x) / stats.norm.pdf(y)


def hermite(alpha: int, y: float | np.ndarray) -> Any:
    """Probabilists' Hermite h_alpha via h_{a+1} = y h_a - a h_{a-1}"""
    if alpha < 0:
        raise InputError(f"Hermite order must be non-negative, got {alpha}")
    y = np.asarray(y, dtype=float)
    previous, current = np.zeros_like(y), np.ones_like(y)
    for a in range(alpha):
        previous, current = current, y * current - a * previous
    return current


def normalized_hermite(alpha: int, y: float | np.ndarray) -> Any:
    """psi_alpha = h_alpha / sqrt(alpha!)"""
    return hermite(alpha, y) / np.sqrt(special.factorial(alpha, exact=False))


def mehler_series(y: float | np.ndarray, x: float | np.ndarray, t: float, a_max: int) -> Any:
    """sum_{alpha <= a_max} e^{-alpha t/2} psi_alpha(y) psi_alpha(x)"""
    return sum(np.exp(-0.5 * a * t) * normalized_hermite(a, y) * normalized_hermite(a, x) for a in range(a_max + 1))


def quadrature(n_nodes: int = QUADRATURE_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes and weights for the standard normal measure (weights sum to 1)"""
    nodes, weights = hermegauss(n_nodes)
    return nodes, weights / np.sqrt(2.0 * np.pi)


def exact_rates(a_max: int = REFERENCE_ORDERS) -> np.ndarray:
    return 0.5 * np.arange(a_max + 1)


def spectrum_error(lambda_hat: Sequence[float] | np.ndarray, a_max: int = REFERENCE_ORDERS) -> float:
    """sum (alpha/2 - lambda_hat_alpha)^2 / sum (alpha/2)^2 over alpha = 0..a_max"""
    lambda_hat = np.asarray(lambda_hat, dtype=float)
    if lambda_hat.size < a_max + 1:
        raise InputError(f"need {a_max + 1} rate estimates, got {lambda_hat.size}")
    exact = exact_rates(a_max)
    return float(np.sum((exact - lambda_hat[: a_max + 1]) ** 2) / np.sum(exact**2))


def reference_spectrum(
    n_d: int = 1200,
    n_mc: int | None = None,
    delta_t: float = REFERENCE_DELTA_T,
    n_instants: int = REFERENCE_N_INSTANTS,
    instant: int = REFERENCE_INSTANT,
    seed: int = 0,
    a_max: int = REFERENCE_ORDERS,
) -> dict[str, Any]:
    """
    Full pipeline on a standard Gaussian training set.

    Gaussian training set -> GKDE -> ISDE -> exact transient kernel at `instant`
    -> rates -> err_lambda. The kernel at the last instant is also measured
    against the stationary value 1/n_d.
    """
    n_mc = n_d if n_mc is None else n_mc
    ts = generate(GeneratorSpec(kind=GeneratorKind.GAUSSIAN, nu=1, n_d=n_d, seed=derive_seed(seed, "reference", n_d)))
    model = gkde.build_model(ts)
    cfg = IsdeConfig.from_bandwidths(
        model.bw, delta_t=delta_t, n_instants=n_instants, n_mc=n_mc, seed=derive_seed(seed, "reference-isde", n_d)
    )
    traj = isde.simulate(model, cfg)
    ybar, sbar = isde.convergence_curves(traj)

    matrices = kernels.transient_exact_matrices(model, traj, [instant, n_instants])
    km = matrices[instant]
    spectrum = kernels.exact_spectrum(km, a_max + 1)
    rates, skipped = kernels.rate_estimates(spectrum, km.t)
    err = spectrum_error(rates, a_max) if rates.size >= a_max + 1 else float("nan")

    stationary = matrices[n_instants].k
    stationarity = float(np.max(np.abs(stationary - 1.0 / n_d)) * n_d)
    logger.info(f"Reference n_d={n_d}: err_lambda={err:.4e}, rates={np.round(rates, 4).tolist()}")
    return {
        "n_d": n_d,
        "n_mc": n_mc,
        "s": model.bw.s,
        "s_hat": model.bw.s_hat,
        "ratio": model.bw.ratio,
        "s_sb": silverman(1, n_mc),
        "delta_t": cfg.delta_t,
        "kappa": cfg.kappa,
        "instant": instant,
        "t": km.t,
        "eigvals": spectrum.eigvals.tolist(),
        "rates": rates.tolist(),
        "exact": exact_rates(a_max).tolist(),
        "skipped": skipped,
        "err_lambda": err,
        "ybar": ybar.tolist(),
        "sbar": sbar.tolist(),
        "stationarity": stationarity,
    }


def nd_sweep(
    grid: Sequence[int] = REFERENCE_ND_GRID,
    seed: int = 0,
    progress_callback: Callable[[int, int], None] | None = None,
    **kwargs: Any,
) -> list[dict[str, Any]]:
    """err_lambda over the n_d grid, n_mc = n_d"""
    rows = []
    for position, n_d in enumerate(grid, start=1):
        result = reference_spectrum(n_d=n_d, seed=seed, **kwargs)
        rows.append({"n_d": n_d, "err_lambda": result["err_lambda"], "rates": result["rates"]})
        if progress_callback:
            progress_callback(position, len(grid))
    return rows
