"""
PLoM generator: reduced-order ISDE sampled with Stormer-Verlet

Each learned matrix comes from an independent restart of M0 steps from
[Z(0)] = [eta_d][a], [Y(0)] = [N][a]. Restarts are grouped in blocks of
PLOM_BLOCK_SIZE, each with its own stream keyed (seed, "plom", block). The
constraint loop reuses the same streams at every iteration, so err(i) is a
smooth function of the multipliers.
"""

import logging
from collections.abc import Callable

import numpy as np
from scipy import linalg

from plom.config import DIVERGENCE_PATIENCE, GAMMA_REGULARIZATION, PLOM_BLOCK_SIZE
from plom.exceptions import Diverged, InputError, NonFinite, SingularCovariance, SingularGram
from plom.models import ConstraintMode, GkdeModel, KernelBasis, LearnedSet, PlomConfig
from plom.parallel import map_blocks
from plom.rng import block_ranges, stream
from plom.services.gkde import grad_log_pdf_points

logger = logging.getLogger(__name__)


def default_dt_sv(s_hat: float) -> float:
    """Stormer-Verlet step 2 pi s_hat / 20"""
    return 2.0 * np.pi * s_hat / 20.0


def full_basis(n_d: int) -> KernelBasis:
    """Identity basis: the sampler then runs unprojected MCMC of the GKDE measure"""
    return KernelBasis(kind="full", eigvals=np.ones(n_d), eigvecs=np.eye(n_d), m=n_d)


def projector(basis: KernelBasis) -> np.ndarray:
    """[a] = [g]([g]^T[g])^{-1}"""
    g = basis.eigvecs
    gram = g.T @ g
    if np.linalg.cond(gram) > 1.0 / np.finfo(float).eps:
        raise SingularGram("Basis Gram matrix is numerically singular", m=basis.m)
    return linalg.solve(gram, g.T, assume_a="pos").T


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------


def _pairs(nu: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(nu, k=1)


def constraint_targets(mode: ConstraintMode, nu: int) -> np.ndarray:
    """
    Target vector b.

    diagonal: (1,)*nu; full: (0,)*nu means, (1,)*nu second moments, (0,)*nu(nu-1)/2 cross moments
    """
    if mode == ConstraintMode.DIAGONAL:
        return np.ones(nu)
    if mode == ConstraintMode.FULL:
        return np.concatenate([np.zeros(nu), np.ones(nu), np.zeros(nu * (nu - 1) // 2)])
    raise InputError(f"No constraint targets for mode {mode.value}")


def constraint_functions(mode: ConstraintMode, eta: np.ndarray) -> np.ndarray:
    """h(eta) for every column, packed like constraint_targets"""
    if mode == ConstraintMode.DIAGONAL:
        return eta**2
    if mode == ConstraintMode.FULL:
        rows, cols = _pairs(eta.shape[0])
        return np.concatenate([eta, eta**2, eta[rows] * eta[cols]])
    raise InputError(f"No constraint functions for mode {mode.value}")


def constraint_gradient(mode: ConstraintMode, lam: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Gradient of lambda . h(u), subtracted from the drift"""
    nu = u.shape[0]
    if mode == ConstraintMode.DIAGONAL:
        return 2.0 * lam[:, None] * u
    if mode == ConstraintMode.FULL:
        means, squares, cross = lam[:nu], lam[nu : 2 * nu], lam[2 * nu :]
        coupling = np.zeros((nu, nu))
        rows, cols = _pairs(nu)
        coupling[rows, cols] = cross
        coupling = coupling + coupling.T
        return means[:, None] + 2.0 * squares[:, None] * u + coupling @ u
    return np.zeros_like(u)


def constraint_hessian(h: np.ndarray, n_d: int) -> np.ndarray:
    """
    Covariance of the constraint functions for the Newton step on lambda.

    h holds n_MCH learned matrices of n_d columns each, in eta_ar order. The
    multiplier tilts every column of a matrix at once, so the response of the
    mean of h is n_d cov(matrix means), which the pooled covariance misses when
    the columns of a matrix are correlated (a reduced basis with m << n_d).
    Returns cov_within + n_d cov_between; both terms agree for independent
    columns, and cov_within keeps the matrix full rank when n_MCH is small.
    """
    dim, n_ar = h.shape
    per_matrix = h.reshape(dim, n_ar // n_d, n_d)
    means = per_matrix.mean(axis=2)
    centred = per_matrix - means[:, :, None]
    within = np.einsum("kln,jln->kj", centred, centred) / (n_ar - means.shape[1])
    if means.shape[1] < 2:
        return within
    between = np.atleast_2d(np.cov(means))
    return within + n_d * between


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------


def _run_block(
    model: GkdeModel,
    g: np.ndarray,
    a: np.ndarray,
    cfg: PlomConfig,
    lam: np.ndarray | None,
    block: tuple[int, int, int],
    start_z: np.ndarray | None,
) -> np.ndarray:
    """Learned matrices of one restart block, shape (b, nu, n_d)"""
    index, start, stop = block
    size = stop - start
    nu, n_d = model.nu, model.n_d
    rng = stream(cfg.seed, "plom", index)

    dt = cfg.dt_sv
    damping = cfg.f0 * dt / 4.0
    keep = (1.0 - damping) / (1.0 + damping)
    push = dt / (1.0 + damping)
    kick = np.sqrt(cfg.f0) / (1.0 + damping)

    if start_z is None:
        z = np.broadcast_to(model.ts.eta @ a, (size, nu, a.shape[1])).copy()
    else:
        z = start_z[start:stop].copy()
    y = rng.standard_normal((size, nu, n_d)) @ a

    for _ in range(cfg.m0):
        dw = (np.sqrt(dt) * rng.standard_normal((size, nu, n_d))) @ a
        z_half = z + 0.5 * dt * y
        u = z_half @ g.T
        points = u.transpose(1, 0, 2).reshape(nu, size * n_d)
        grad = grad_log_pdf_points(model, points, parallel=False)
        if lam is not None and cfg.constraints != ConstraintMode.NONE:
            grad = grad - constraint_gradient(cfg.constraints, lam, points)
        drift = grad.reshape(nu, size, n_d).transpose(1, 0, 2) @ a
        y = keep * y + push * drift + kick * dw
        z = z_half + 0.5 * dt * y

    learned = z @ g.T
    if not np.all(np.isfinite(learned)):
        raise NonFinite(f"Learned realizations became non-finite; reduce dt_sv={dt}", block=index)
    return learned


def generate(
    model: GkdeModel,
    basis: KernelBasis,
    cfg: PlomConfig,
    lam: np.ndarray | None = None,
    previous: LearnedSet | None = None,
) -> LearnedSet:
    """
    n_MCH learned matrices [eta_ar^l] = [z^l][g]^T, reshaped to nu x (n_d n_MCH).

    previous, when given, warm-starts every restart from its learned matrices.
    """
    if basis.n_d != model.n_d:
        raise InputError(f"basis has {basis.n_d} rows, training set has n_d={model.n_d}")
    g = basis.eigvecs
    a = projector(basis)
    start_z = previous.matrices(model.n_d) @ a if previous is not None else None

    ranges = block_ranges(cfg.n_mch, PLOM_BLOCK_SIZE)
    parts = map_blocks(lambda block: _run_block(model, g, a, cfg, lam, block, start_z), ranges)
    matrices = np.concatenate(parts)
    eta_ar = matrices.transpose(1, 0, 2).reshape(model.nu, cfg.n_mch * model.n_d)
    return LearnedSet(
        eta_ar=eta_ar,
        n_mch=cfg.n_mch,
        lam=np.zeros(0) if lam is None else np.asarray(lam, dtype=float),
        basis_kind=str(getattr(basis.kind, "value", basis.kind)),
    )


def constrain(
    model: GkdeModel,
    basis: KernelBasis,
    cfg: PlomConfig,
    progress_callback: Callable[[int, float], None] | None = None,
) -> LearnedSet:
    """
    Iterate the Lagrange multipliers until the learned second moments meet their targets.

    lambda <- lambda - alpha_i Gamma''^{-1} Gamma', Gamma' = b - E h, Gamma'' from constraint_hessian.
    Stops at err <= err_tol or max_iter (returned with converged=False).
    """
    if cfg.constraints == ConstraintMode.NONE:
        raise InputError("constrain needs a constraint mode other than 'none'")
    mode = cfg.constraints
    target = constraint_targets(mode, model.nu)
    target_norm = float(np.linalg.norm(target))
    lam = np.zeros(target.size)

    errors: list[float] = []
    alphas: list[float] = []
    increases = 0
    learned: LearnedSet | None = None

    for i in range(1, cfg.max_iter + 1):
        learned = generate(model, basis, cfg, lam, previous=learned if cfg.warm_start else None)
        h = constraint_functions(mode, learned.eta_ar)
        gradient = target - h.mean(axis=1)
        err = float(np.linalg.norm(gradient) / target_norm)

        increases = increases + 1 if errors and err > errors[-1] else 0
        errors.append(err)
        if progress_callback:
            progress_callback(i, err)
        logger.debug(f"constraint iteration {i}: err={err:.6e}")

        if err <= cfg.err_tol:
            alphas.append(0.0)
            logger.info(f"Constraints met at iteration {i}: err={err:.6e}")
            return learned.model_copy(
                update={"lam": lam.copy(), "err_trace": errors, "alpha_trace": alphas, "i_last": i, "converged": True}
            )
        if increases >= DIVERGENCE_PATIENCE:
            raise Diverged(f"Constraint error grew for {increases} consecutive iterations", iteration=i, err=err)

        hessian = constraint_hessian(h, model.n_d)
        hessian += GAMMA_REGULARIZATION * np.trace(hessian) / target.size * np.eye(target.size)
        try:
            step = linalg.solve(hessian, gradient, assume_a="pos")
        except linalg.LinAlgError as e:
            raise SingularCovariance("Covariance of the constraint functions is singular", iteration=i) from e
        alpha = cfg.relaxation(i)
        alphas.append(alpha)
        lam = lam - alpha * step

    assert learned is not None
    logger.warning(f"Constraints not met after {cfg.max_iter} iterations: err={errors[-1]:.6e}")
    return learned.model_copy(
        update={
            "lam": lam.copy(),
            "err_trace": errors,
            "alpha_trace": alphas,
            "i_last": cfg.max_iter,
            "converged": False,
        }
    )


def learn(model: GkdeModel, basis: KernelBasis, cfg: PlomConfig) -> LearnedSet:
    """generate or constrain depending on cfg.constraints"""
    if cfg.constraints == ConstraintMode.NONE:
        learned = generate(model, basis, cfg)
    else:
        learned = constrain(model, basis, cfg)
    logger.info(f"Learned {learned.n_ar} realizations with the {learned.basis_kind} basis")
    return learned
