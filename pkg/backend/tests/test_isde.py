import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from plom.models import IsdeConfig
from plom.services import gkde, isde
from plom.storage import read_matrix


def test_step_from_kappa():
    cfg = IsdeConfig.from_bandwidths(gkde.bandwidths(9, 400), kappa=30)
    assert cfg.delta_t == pytest.approx(0.00848, abs=1e-5)
    assert cfg.delta_small == cfg.delta_t


def test_kappa_from_step():
    bw = gkde.bandwidths(1, 1200)
    cfg = IsdeConfig.from_bandwidths(bw, delta_t=0.061796)
    assert cfg.kappa == pytest.approx(bw.s_hat**2 / 0.061796)


def test_shapes_and_statistics(small_traj):
    assert small_traj.materialized
    assert small_traj.y.shape == (24, 3, 2, 40)
    assert_allclose(small_traj.mean_n, small_traj.y.mean(axis=0), atol=1e-12)
    assert_allclose(small_traj.sigma_n, small_traj.y.std(axis=0), atol=1e-12)
    assert small_traj.time(2) == pytest.approx(2 * small_traj.cfg.delta_t)


def test_results_do_not_depend_on_thread_count(gaussian_model, thread_cap):
    cfg = IsdeConfig.from_bandwidths(gaussian_model.bw, n_instants=2, n_mc=150, seed=4)
    thread_cap(1)
    serial = isde.simulate(gaussian_model, cfg)
    thread_cap(4)
    threaded = isde.simulate(gaussian_model, cfg)
    assert_array_equal(serial.y, threaded.y)
    assert_array_equal(serial.sigma_n, threaded.sigma_n)


def test_streaming_regenerates_the_same_states(gaussian_model, small_traj):
    streamed = isde.simulate(gaussian_model, small_traj.cfg, memory_budget_mb=0)
    assert not streamed.materialized
    assert_array_equal(streamed.sigma_n, small_traj.sigma_n)

    states = np.concatenate([block for _, block in isde.iter_blocks(streamed, [1, 3])])
    assert_array_equal(states, small_traj.y[:, [0, 2]])


def test_without_noise_and_drift_the_states_stay_put(gaussian_model):
    cfg = IsdeConfig.from_bandwidths(gaussian_model.bw, n_instants=2, n_mc=5, noise=False, drift=False)
    traj = isde.simulate(gaussian_model, cfg)
    assert_array_equal(traj.y[3, 1], gaussian_model.ts.eta)
    assert np.all(traj.sigma_n == 0)


def test_drift_switch_keeps_the_noise_aligned(gaussian_model):
    base = IsdeConfig.from_bandwidths(gaussian_model.bw, n_instants=1, n_mc=3, seed=9)
    full = isde.simulate(gaussian_model, base)
    noise_only = isde.simulate(gaussian_model, base.model_copy(update={"drift": False}))
    # Same noise in both runs: they differ by exactly one drift step taken at eta
    eta = gaussian_model.ts.eta
    step = 0.5 * base.delta_t * gkde.grad_log_pdf_points(gaussian_model, eta)
    assert_allclose(full.y[:, 0] - noise_only.y[:, 0], np.broadcast_to(step, (3, *eta.shape)), atol=1e-12)


def test_convergence_curves(small_traj):
    ybar, sbar = isde.convergence_curves(small_traj)
    assert ybar.shape == sbar.shape == (3,)
    assert np.all(sbar > 0)


def test_export_instants(small_traj, store):
    paths = isde.export_instants(small_traj, store, [2])
    matrix = read_matrix(paths[0])
    assert matrix.shape == (2, 24 * 40)
    assert_array_equal(matrix[:, 40:80], small_traj.y[1, 1])
