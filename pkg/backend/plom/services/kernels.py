"""
Kernel matrices and their reduced eigenbases

Three kernels share one representation, [K] = [B]^{-1}[kernel]:
- DMAPS: isotropic exp(-||eta^i - eta^j||^2 / (4 eps)), B its row sums
- transient exact: transition-density GKDE over the ISDE realizations,
  B_ii = sum_j exp(-||eta^i - (s_hat/s) eta^j||^2 / (2 s_hat^2))
- transient connected: anisotropic exp(-(1/4 eps) sum_k ((eta_k^i - y_kj)/(sigma_kj/sqrt(dt)))^2),
  B taken from the DMAPS kernel

Transient kernels are averaged over realizations with a streaming
log-sum-exp, one (max, scaled sum) pair per entry, folded in block order.
"""

import logging
from collections.abc import Callable, Sequence

import numpy as np
from scipy import linalg
from scipy.optimize import minimize_scalar
from scipy.spatial.distance import cdist

from plom.config import (
    DEFAULT_JUMP_TARGET,
    EPS_SEARCH_GRID,
    EPS_SEARCH_MAX,
    EPS_SEARCH_MIN,
    KERNEL_CHUNK_ENTRIES,
)
from plom.exceptions import DegenerateSigma, DimensionMismatch, InputError, NoEpsilonFound
from plom.models import (
    GkdeModel,
    IsdeConfig,
    IsdeTrajectorySet,
    KernelBasis,
    KernelKind,
    KernelMatrix,
    TrainingSet,
)
from plom.parallel import get_thread_cap, map_blocks
from plom.services import isde
from plom.services.gkde import silverman
from plom.services.selection import subspace_angle

logger = logging.getLogger(__name__)

# Exponents of one instant for a group of realizations (g, nu, n_d) -> (g, n_d, n_d)
TermBuilder = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# DMAPS
# ---------------------------------------------------------------------------


def _dmaps_kernel(ts: TrainingSet, eps_dm: float) -> np.ndarray:
    d2 = cdist(ts.eta.T, ts.eta.T, "sqeuclidean")
    return np.exp(-d2 / (4.0 * eps_dm))


def dmaps_matrix(ts: TrainingSet, eps_dm: float) -> KernelMatrix:
    """[K_DM] = [B]^{-1}[kernel_DM], B the row sums"""
    if eps_dm <= 0:
        raise InputError(f"eps_dm must be positive, got {eps_dm}")
    kernel = _dmaps_kernel(ts, eps_dm)
    return KernelMatrix(kind=KernelKind.DMAPS, kernel=kernel, b=kernel.sum(axis=1), eps=eps_dm)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Largest-magnitude entry of each column made positive"""
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _symmetric_eigen(kernel: np.ndarray, b: np.ndarray, count: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Top eigenpairs of P^S = (P + P^T)/2 with P = B^{-1/2} kernel B^{-1/2}.

    Returns:
        (eigvals descending, phi orthonormal, g = B^{-1/2} phi)
    """
    n_d = kernel.shape[0]
    count = min(count, n_d)
    half = 1.0 / np.sqrt(b)
    p = half[:, None] * kernel * half[None, :]
    p_sym = 0.5 * (p + p.T)
    eigvals, phi = linalg.eigh(p_sym, subset_by_index=[n_d - count, n_d - 1])
    eigvals = eigvals[::-1]
    phi = _fix_signs(phi[:, ::-1])
    return eigvals, phi, half[:, None] * phi


def _basis(
    km: KernelMatrix,
    m: int,
    kind: KernelKind,
    eps_dm: float | None = None,
    jump: float | None = None,
    jump_ok: bool = True,
) -> KernelBasis:
    if m < 1 or m > km.n_d:
        raise InputError(f"truncation m={m} must lie in 1..{km.n_d}")
    eigvals, phi, g = _symmetric_eigen(km.kernel, km.b, m)
    n_negative = int(np.sum(eigvals < 0))
    if n_negative:
        logger.warning(f"{n_negative} negative eigenvalue(s) in the top {m} of the {kind.value} kernel at n={km.instant}")
    return KernelBasis(
        kind=kind,
        eigvals=eigvals,
        eigvecs=g,
        phi=phi,
        b=km.b,
        m=m,
        instant=km.instant,
        t=km.t,
        eps_dm=eps_dm if eps_dm is not None else km.eps,
        jump=jump,
        jump_ok=jump_ok,
        n_negative=n_negative,
    )


def dmaps_jump(ts: TrainingSet, eps_dm: float, m: int | None = None) -> float:
    """J = b_{m+1} / b_m with m = nu + 1 by default"""
    m = ts.nu + 1 if m is None else m
    km = dmaps_matrix(ts, eps_dm)
    eigvals, _, _ = _symmetric_eigen(km.kernel, km.b, m + 1)
    if eigvals[m - 1] <= 0:
        return 1.0
    return float(eigvals[m] / eigvals[m - 1])


def dmaps_basis_at(ts: TrainingSet, eps_dm: float, m: int | None = None) -> KernelBasis:
    """DMAPS basis for a given eps, no search"""
    m = ts.nu + 1 if m is None else m
    return _basis(dmaps_matrix(ts, eps_dm), m, KernelKind.DMAPS, jump=dmaps_jump(ts, eps_dm, m))


def search_epsilon(ts: TrainingSet, jump_target: float, m: int) -> tuple[float, float, bool]:
    """
    Smallest eps with J(eps) <= jump_target.

    A log grid locates the first crossing, then a golden-section search on
    (log J - log target)^2 refines it inside the bracketing grid cell.

    Returns:
        (eps, J(eps), achieved)
    """
    grid = np.geomspace(EPS_SEARCH_MIN, EPS_SEARCH_MAX, EPS_SEARCH_GRID)
    jumps = np.array([dmaps_jump(ts, eps, m) for eps in grid])
    hits = np.flatnonzero(jumps <= jump_target)
    if hits.size == 0:
        best = int(np.argmin(jumps))
        return float(grid[best]), float(jumps[best]), False
    first = int(hits[0])
    if first == 0:
        return float(grid[0]), float(jumps[0]), True

    log_target = np.log(jump_target)

    def objective(log_eps: float) -> float:
        return float((np.log(max(dmaps_jump(ts, float(np.exp(log_eps)), m), 1e-300)) - log_target) ** 2)

    # Golden section needs a strict bracketing triple
    cell = np.linspace(np.log(grid[first - 1]), np.log(grid[first]), 9)
    values = [objective(x) for x in cell]
    best = int(np.argmin(values))
    log_eps = float(cell[best])
    if 0 < best < cell.size - 1 and values[best] < values[best - 1] and values[best] < values[best + 1]:
        result = minimize_scalar(
            objective, bracket=(cell[best - 1], cell[best], cell[best + 1]), method="golden", options={"xtol": 1e-6}
        )
        log_eps = float(result.x)
    eps = float(np.exp(log_eps))
    jump = dmaps_jump(ts, eps, m)
    if jump > jump_target:
        eps, jump = float(grid[first]), float(jumps[first])
    return eps, jump, True


def dmaps_basis(ts: TrainingSet, jump_target: float = DEFAULT_JUMP_TARGET, strict: bool = False) -> KernelBasis:
    """
    Reduced DMAPS basis with m_opt = nu + 1 and eps_opt from the jump target.

    A missed target keeps the best-effort eps with jump_ok=False, or raises
    NoEpsilonFound when strict.
    """
    m = ts.nu + 1
    if ts.n_d <= m:
        raise InputError(f"DMAPS basis needs n_d > nu + 1, got n_d={ts.n_d}, nu={ts.nu}")
    eps, jump, achieved = search_epsilon(ts, jump_target, m)
    if not achieved:
        message = f"No eps in [{EPS_SEARCH_MIN:g}, {EPS_SEARCH_MAX:g}] reaches jump {jump_target}; best J={jump:.4f}"
        if strict:
            raise NoEpsilonFound(message, jump_target=jump_target, best_eps=eps, best_jump=jump)
        logger.warning(message)
    basis = _basis(dmaps_matrix(ts, eps), m, KernelKind.DMAPS, jump=jump, jump_ok=achieved)
    logger.info(f"DMAPS: m_opt={m}, eps_opt={eps:.4g}, J={jump:.4f} (target {jump_target})")
    return basis


# ---------------------------------------------------------------------------
# Transient kernels
# ---------------------------------------------------------------------------


def _check_sigma(traj: IsdeTrajectorySet, instants: Sequence[int]) -> None:
    for n in instants:
        if not 1 <= n <= traj.n_instants:
            raise InputError(f"instant {n} outside 1..{traj.n_instants}")
        if np.any(traj.sigma_n[n - 1] <= 0):
            raise DegenerateSigma(
                f"Zero trajectory standard deviation at instant {n} (noiseless or collapsed realizations)",
                instant=n,
            )


class _LogSumAccumulator:
    """Running (max, scaled sum) of exp(terms) for every matrix entry"""

    def __init__(self, shape: tuple[int, ...]):
        self.peak = np.full(shape, -np.inf)
        self.total = np.zeros(shape)

    def _rescaled(self, shift: np.ndarray) -> np.ndarray:
        return np.where(np.isfinite(self.peak), self.total * np.exp(self.peak - shift), 0.0)

    def add_terms(self, terms: np.ndarray) -> None:
        """terms has a leading realization axis"""
        peak = np.maximum(self.peak, terms.max(axis=0))
        shift = np.where(np.isfinite(peak), peak, 0.0)
        self.total = self._rescaled(shift) + np.exp(terms - shift).sum(axis=0)
        self.peak = peak

    def merge(self, other: "_LogSumAccumulator") -> None:
        peak = np.maximum(self.peak, other.peak)
        shift = np.where(np.isfinite(peak), peak, 0.0)
        self.total = self._rescaled(shift) + other._rescaled(shift)
        self.peak = peak

    def log_sum(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self.peak + np.log(self.total)


def _log_terms_factory(eta: np.ndarray, weights: np.ndarray, log_pref: np.ndarray, coeff: float) -> TermBuilder:
    """
    Exponent builder for one instant.

    term[i, j] = log_pref_j - coeff * sum_k W_kj^2 (eta_ki - y_kj)^2, expanded as
    sum eta^2 W^2 - 2 eta^T (W^2 y) + sum W^2 y^2 so each realization costs one product.
    """
    w2 = weights**2
    base = (eta**2).T @ w2

    def build(y: np.ndarray) -> np.ndarray:
        # y: (g, nu, n_d)
        wy = w2[None] * y
        cross = eta.T[None] @ wy
        tail = (wy * y).sum(axis=1)
        quad = np.maximum(base[None] - 2.0 * cross + tail[:, None, :], 0.0)
        return log_pref[None, None, :] - coeff * quad

    return build


def _accumulate(
    traj: IsdeTrajectorySet,
    instants: Sequence[int],
    builders: dict[int, TermBuilder],
) -> dict[int, np.ndarray]:
    """log of sum over realizations of exp(term), per instant"""
    n_d = traj.model.n_d
    group = max(1, KERNEL_CHUNK_ENTRIES // (n_d * n_d))
    ranges = isde.blocks(traj)

    def run_block(block: tuple[int, int, int]) -> list[_LogSumAccumulator]:
        states = isde.block_states(traj, block, instants)
        accs = []
        for slot, n in enumerate(instants):
            acc = _LogSumAccumulator((n_d, n_d))
            build = builders[n]
            for start in range(0, states.shape[0], group):
                acc.add_terms(build(states[start : start + group, slot]))
            accs.append(acc)
        return accs

    totals = [_LogSumAccumulator((n_d, n_d)) for _ in instants]
    wave = max(1, get_thread_cap())
    for offset in range(0, len(ranges), wave):
        for block_accs in map_blocks(run_block, ranges[offset : offset + wave]):
            for total, acc in zip(totals, block_accs):
                total.merge(acc)
    return {n: total.log_sum() for n, total in zip(instants, totals)}


def transient_exact_matrices(
    model: GkdeModel, traj: IsdeTrajectorySet, instants: Sequence[int]
) -> dict[int, KernelMatrix]:
    """
    [K_hat(n dt)] for several instants in one pass over the realizations.

    kernel_ij = mean_l (s_hat^nu / (s_SB^nu prod_k sigma_kj)) exp(-1/2 sum_k ((eta_ki - y_kj)/(s_SB sigma_kj))^2)
    with s_SB the Silverman bandwidth for (nu, n_mc).
    """
    instants = sorted(set(instants))
    _check_sigma(traj, instants)
    eta = model.ts.eta
    nu, n_mc = model.nu, traj.cfg.n_mc
    s_sb = silverman(nu, n_mc)

    builders = {}
    for n in instants:
        sigma = traj.sigma_n[n - 1]
        log_pref = nu * (np.log(model.bw.s_hat) - np.log(s_sb)) - np.log(sigma).sum(axis=0)
        builders[n] = _log_terms_factory(eta, 1.0 / (s_sb * sigma), log_pref, 0.5)

    log_sums = _accumulate(traj, instants, builders)
    d2 = cdist(eta.T, model.centres.T, "sqeuclidean")
    b = np.exp(-d2 / (2.0 * model.bw.s_hat**2)).sum(axis=1)

    matrices = {}
    for n in instants:
        kernel = np.exp(log_sums[n] - np.log(n_mc))
        matrices[n] = KernelMatrix(kind=KernelKind.TRANSIENT_EXACT, kernel=kernel, b=b, instant=n, t=traj.time(n))
    logger.info(f"Exact transient kernels at n={instants} (s_SB={s_sb:.4f}, n_mc={n_mc})")
    return matrices


def transient_exact_matrix(model: GkdeModel, traj: IsdeTrajectorySet, n: int) -> KernelMatrix:
    return transient_exact_matrices(model, traj, [n])[n]


def transient_connected_matrices(
    ts: TrainingSet, traj: IsdeTrajectorySet, instants: Sequence[int], eps_dm: float
) -> dict[int, KernelMatrix]:
    """
    [K_tilde(n dt)] for several instants in one pass.

    The anisotropic prefactor is prod_k (sigma_kj / sqrt(dt))^{-1}, which
    tends to 1 together with sigma/sqrt(dt) when dt -> 0, so K_tilde(dt)
    reaches [K_DM].
    """
    if ts.eta.shape != traj.model.ts.eta.shape:
        raise DimensionMismatch(f"training set {ts.eta.shape} does not match trajectories {traj.model.ts.eta.shape}")
    if eps_dm <= 0:
        raise InputError(f"eps_dm must be positive, got {eps_dm}")
    instants = sorted(set(instants))
    _check_sigma(traj, instants)
    sqrt_dt = np.sqrt(traj.cfg.delta_t)

    builders = {}
    for n in instants:
        scaled_sigma = traj.sigma_n[n - 1] / sqrt_dt
        log_pref = -np.log(scaled_sigma).sum(axis=0)
        builders[n] = _log_terms_factory(ts.eta, 1.0 / scaled_sigma, log_pref, 1.0 / (4.0 * eps_dm))

    log_sums = _accumulate(traj, instants, builders)
    b = _dmaps_kernel(ts, eps_dm).sum(axis=1)

    matrices = {}
    for n in instants:
        kernel = np.exp(log_sums[n] - np.log(traj.cfg.n_mc))
        matrices[n] = KernelMatrix(
            kind=KernelKind.TRANSIENT_CONNECTED, kernel=kernel, b=b, instant=n, t=traj.time(n), eps=eps_dm
        )
    logger.info(f"Connected transient kernels at n={instants} (eps={eps_dm:.4g})")
    return matrices


def transient_connected_matrix(ts: TrainingSet, traj: IsdeTrajectorySet, n: int, eps_dm: float) -> KernelMatrix:
    return transient_connected_matrices(ts, traj, [n], eps_dm)[n]


def transient_basis(km: KernelMatrix, m: int) -> KernelBasis:
    """Eigenbasis of the symmetrized B^{-1/2} kernel B^{-1/2}, truncated to m columns"""
    return _basis(km, m, km.kind)


def transient_bases(matrices: dict[int, KernelMatrix], m: int) -> dict[int, KernelBasis]:
    """Decompose several instants concurrently"""
    instants = sorted(matrices)
    bases = map_blocks(lambda n: transient_basis(matrices[n], m), instants)
    return dict(zip(instants, bases))


def exact_spectrum(km: KernelMatrix, count: int) -> KernelBasis:
    """Leading eigenpairs of the symmetrized exact transient kernel"""
    return _basis(km, count, KernelKind.TRANSIENT_EXACT)


def rate_estimates(basis: KernelBasis, t: float) -> tuple[np.ndarray, int]:
    """
    lambda_alpha = -log(b_alpha) / t for the positive eigenvalues.

    Returns:
        (rates, number of skipped non-positive eigenvalues)
    """
    if t <= 0:
        raise InputError(f"rate estimates need t > 0, got {t}")
    positive = basis.eigvals[basis.eigvals > 0]
    skipped = int(basis.eigvals.size - positive.size)
    if skipped:
        logger.warning(f"Skipped {skipped} non-positive eigenvalue(s) in rate estimates at t={t:.6g}")
    return -np.log(positive) / t, skipped


def relative_distance(a: KernelMatrix, b: KernelMatrix) -> float:
    """||K_a - K_b||_F / ||K_b||_F"""
    return float(np.linalg.norm(a.k - b.k, "fro") / np.linalg.norm(b.k, "fro"))


def kappa_sweep(
    model: GkdeModel,
    kappas: Sequence[float],
    n_mc: int,
    seed: int,
    eps_dm: float,
    angle_method: str = "principal",
) -> list[dict[str, float]]:
    """
    Small-step limit of the connected kernel.

    For each kappa a one-instant ISDE is run and K_tilde(dt) is compared
    with [K_DM] (relative Frobenius distance and subspace angle of the bases).
    """
    ts = model.ts
    m = ts.nu + 1
    dmaps_km = dmaps_matrix(ts, eps_dm)
    dmaps = _basis(dmaps_km, m, KernelKind.DMAPS)
    rows = []
    for kappa in kappas:
        cfg = IsdeConfig.from_bandwidths(model.bw, kappa=kappa, n_instants=1, n_mc=n_mc, seed=seed)
        traj = isde.simulate(model, cfg)
        km = transient_connected_matrix(ts, traj, 1, eps_dm)
        distance = relative_distance(km, dmaps_km)
        angle = subspace_angle(transient_basis(km, m), dmaps, method=angle_method)
        rows.append({"kappa": float(kappa), "delta_t": cfg.delta_t, "distance": distance, "angle_deg": angle})
        logger.info(f"kappa={kappa:g}: distance={distance:.4e}, angle={angle:.3f} deg")
    return rows
