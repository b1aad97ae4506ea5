"""
Euler integration of the matrix-valued ISDE

    y <- y + (dt/2) L(y) + sqrt(dt) gamma,    y_0 = [eta_d]

Realizations are split into fixed blocks of ISDE_BLOCK_SIZE, each driven by
its own Philox stream keyed (seed, "isde", block). Statistics are merged in
block order, so results do not depend on the thread count. When the retained
states exceed the memory budget only the statistics are kept, and consumers
regenerate blocks on demand through `iter_blocks` / `block_states`.
"""

import logging
from collections.abc import Callable, Iterator, Sequence

import numpy as np

from plom.config import ISDE_BLOCK_SIZE, MEMORY_BUDGET_MB
from plom.exceptions import NonFinite
from plom.models import GkdeModel, IsdeConfig, IsdeTrajectorySet
from plom.parallel import map_blocks
from plom.rng import block_ranges, stream
from plom.services.gkde import grad_log_pdf_points
from plom.storage import ArtifactStore

logger = logging.getLogger(__name__)


def _integrate_block(
    model: GkdeModel,
    cfg: IsdeConfig,
    block: tuple[int, int, int],
    keep: Sequence[int] | None = None,
) -> np.ndarray:
    """
    Retained states of one realization block.

    Returns:
        array (b, len(keep), nu, n_d); keep lists 1-based instants (all by default)
    """
    index, start, stop = block
    size = stop - start
    nu, n_d = model.nu, model.n_d
    keep = list(range(1, cfg.n_instants + 1)) if keep is None else list(keep)
    slots = {n: slot for slot, n in enumerate(keep)}
    last = max(keep) if keep else 0

    rng = stream(cfg.seed, "isde", index)
    dt = cfg.delta_small
    sqrt_dt = np.sqrt(dt)
    y = np.broadcast_to(model.ts.eta, (size, nu, n_d)).copy()
    out = np.empty((size, len(keep), nu, n_d))

    for n in range(1, cfg.n_instants + 1):
        for _ in range(cfg.n_s):
            # Noise is drawn even when disabled so every stream stays aligned
            gamma = rng.standard_normal((size, nu, n_d))
            if cfg.drift:
                points = y.transpose(1, 0, 2).reshape(nu, size * n_d)
                grad = grad_log_pdf_points(model, points, parallel=False)
                y += 0.5 * dt * grad.reshape(nu, size, n_d).transpose(1, 0, 2)
            if cfg.noise:
                y += sqrt_dt * gamma
        if not np.all(np.isfinite(y)):
            raise NonFinite(
                f"ISDE state became non-finite at instant {n}; reduce the step (kappa={cfg.kappa})",
                instant=n,
                block=index,
            )
        if n in slots:
            out[:, slots[n]] = y
        if n >= last:
            break
    return out


def _block_moments(states: np.ndarray) -> tuple[int, np.ndarray, np.ndarray]:
    count = states.shape[0]
    mean = states.mean(axis=0)
    m2 = ((states - mean) ** 2).sum(axis=0)
    return count, mean, m2


def _merge(
    left: tuple[int, np.ndarray, np.ndarray], right: tuple[int, np.ndarray, np.ndarray]
) -> tuple[int, np.ndarray, np.ndarray]:
    """Pairwise combination of (count, mean, M2)"""
    n_a, mean_a, m2_a = left
    n_b, mean_b, m2_b = right
    total = n_a + n_b
    delta = mean_b - mean_a
    mean = mean_a + delta * (n_b / total)
    m2 = m2_a + m2_b + delta**2 * (n_a * n_b / total)
    return total, mean, m2


def trajectory_bytes(model: GkdeModel, cfg: IsdeConfig) -> int:
    return 8 * cfg.n_mc * cfg.n_instants * model.nu * model.n_d


def simulate(
    model: GkdeModel,
    cfg: IsdeConfig,
    memory_budget_mb: float = MEMORY_BUDGET_MB,
    progress_callback: Callable[[int, int], None] | None = None,
) -> IsdeTrajectorySet:
    """
    Integrate n_mc realizations and retain the N instants mu = n_s * n.

    Returns:
        IsdeTrajectorySet with per-instant mean and standard deviation (1/n_mc estimator)
    """
    ranges = block_ranges(cfg.n_mc, ISDE_BLOCK_SIZE)
    materialize = trajectory_bytes(model, cfg) <= memory_budget_mb * 1024 * 1024
    logger.info(
        f"ISDE: n_mc={cfg.n_mc}, N={cfg.n_instants}, n_s={cfg.n_s}, delta_t={cfg.delta_t:.6g} "
        f"(kappa={cfg.kappa:.4g}), {len(ranges)} blocks, {'materialized' if materialize else 'streaming'}"
    )

    done = 0

    def run(block: tuple[int, int, int]) -> tuple[tuple[int, np.ndarray, np.ndarray], np.ndarray | None]:
        nonlocal done
        states = _integrate_block(model, cfg, block)
        done += 1
        if progress_callback:
            progress_callback(done, len(ranges))
        return _block_moments(states), (states if materialize else None)

    results = map_blocks(run, ranges)

    moments = results[0][0]
    for block_moments, _ in results[1:]:
        moments = _merge(moments, block_moments)
    count, mean, m2 = moments
    sigma = np.sqrt(m2 / count)

    y = np.concatenate([states for _, states in results if states is not None]) if materialize else None
    traj = IsdeTrajectorySet(model=model, cfg=cfg, y=y, mean_n=mean, sigma_n=sigma)
    ybar, sbar = convergence_curves(traj)
    logger.info(f"ISDE done: ybar(N)={ybar[-1]:.4f}, sbar(N)={sbar[-1]:.4f}")
    return traj


def convergence_curves(traj: IsdeTrajectorySet) -> tuple[np.ndarray, np.ndarray]:
    """ybar(n) and sbar(n): Frobenius norms of mean and sigma over sqrt(nu n_d)"""
    scale = np.sqrt(traj.model.nu * traj.model.n_d)
    ybar = np.linalg.norm(traj.mean_n, axis=(1, 2)) / scale
    sbar = np.linalg.norm(traj.sigma_n, axis=(1, 2)) / scale
    return ybar, sbar


def blocks(traj: IsdeTrajectorySet) -> list[tuple[int, int, int]]:
    return block_ranges(traj.cfg.n_mc, ISDE_BLOCK_SIZE)


def block_states(traj: IsdeTrajectorySet, block: tuple[int, int, int], instants: Sequence[int]) -> np.ndarray:
    """States of one block at the requested 1-based instants, shape (b, len(instants), nu, n_d)"""
    _, start, stop = block
    if traj.y is not None:
        return traj.y[start:stop][:, [n - 1 for n in instants]]
    return _integrate_block(traj.model, traj.cfg, block, keep=instants)


def iter_blocks(traj: IsdeTrajectorySet, instants: Sequence[int] | None = None) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (block index, states) in block order"""
    instants = list(range(1, traj.n_instants + 1)) if instants is None else list(instants)
    for block in blocks(traj):
        yield block[0], block_states(traj, block, instants)


def export_instants(traj: IsdeTrajectorySet, store: ArtifactStore, instants: Sequence[int] | None = None) -> list[str]:
    """
    One binary matrix per retained instant.

    Each file is nu x (n_mc * n_d); column l * n_d + j holds [y_n^l]_{:, j}.
    """
    instants = list(range(1, traj.n_instants + 1)) if instants is None else list(instants)
    written = []
    for n in instants:
        columns = [
            states[:, 0].transpose(1, 0, 2).reshape(traj.model.nu, -1) for _, states in iter_blocks(traj, [n])
        ]
        path = store.write_matrix(f"trajectories/instant_{n:04d}.bin", np.concatenate(columns, axis=1))
        written.append(str(path))
    logger.info(f"Exported {len(written)} trajectory instants")
    return written
