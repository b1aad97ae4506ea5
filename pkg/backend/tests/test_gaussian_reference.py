import numpy as np
import pytest
from numpy.testing import assert_allclose

from plom.exceptions import InputError
from plom.services import gaussian_reference as ref


def test_hermite_recurrence():
    y = np.linspace(-2.0, 2.0, 7)
    assert_allclose(ref.hermite(0, y), 1.0)
    assert_allclose(ref.hermite(2, y), y**2 - 1.0)
    assert_allclose(ref.hermite(3, y), y**3 - 3.0 * y)
    assert_allclose(ref.hermite(4, y), y**4 - 6.0 * y**2 + 3.0)


def test_quadrature_normalization():
    nodes, weights = ref.quadrature()
    assert nodes.size == 200
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert weights @ nodes**2 == pytest.approx(1.0, abs=1e-10)


def test_normalized_hermite_is_orthonormal():
    nodes, weights = ref.quadrature(60)
    psi = np.array([ref.normalized_hermite(a, nodes) for a in range(6)])
    assert_allclose((psi * weights) @ psi.T, np.eye(6), atol=1e-10)


def test_transition_density_integrates_to_one():
    y = np.linspace(-12.0, 12.0, 8001)
    density = ref.ou_transition_pdf(y, 0.3, 1.5)
    assert np.sum(density) * (y[1] - y[0]) == pytest.approx(1.0, abs=1e-8)


def test_kernel_is_a_markov_kernel_for_the_stationary_measure():
    nodes, weights = ref.quadrature()
    assert weights @ ref.ou_kernel(nodes, 0.7, 0.5) == pytest.approx(1.0, abs=1e-8)


def test_mehler_series_converges_to_the_kernel():
    y, x = np.array([-1.0, 0.2, 1.3]), 0.4
    assert_allclose(ref.mehler_series(y, x, 1.0, 60), ref.ou_kernel(y, x, 1.0), rtol=1e-8)


def test_long_time_kernel_is_one():
    assert ref.ou_kernel(0.8, -0.3, 40.0) == pytest.approx(1.0, abs=1e-8)


def test_moments():
    mean, std = ref.ou_moments(2.0, np.log(4.0))
    assert mean == pytest.approx(1.0)
    assert std == pytest.approx(np.sqrt(0.75))


def test_non_positive_time():
    with pytest.raises(InputError):
        ref.ou_transition_pdf(0.0, 0.0, 0.0)


def test_spectrum_error():
    assert ref.spectrum_error(ref.exact_rates()) == 0.0
    assert ref.spectrum_error([0, 0.5, 1.0, 1.5, 2.0, 2.75]) == pytest.approx(0.0625 / 13.75)
    with pytest.raises(InputError):
        ref.spectrum_error([0.0, 0.5])


def test_reference_pipeline_at_desk_scale():
    result = ref.reference_spectrum(n_d=80, n_mc=80, n_instants=4, instant=2)
    assert result["s_hat"] < result["s"]
    assert len(result["rates"]) + result["skipped"] == 6
    assert np.all(np.isfinite(result["rates"]))
    assert len(result["ybar"]) == 4


@pytest.mark.slow
def test_gaussian_spectrum_matches_half_integers():
    result = ref.reference_spectrum(n_d=1200)
    assert result["err_lambda"] <= 0.05
    assert abs(result["ybar"][-1]) <= 0.05
    assert abs(result["sbar"][-1] - 1.0) <= 0.05
    assert result["stationarity"] <= 0.1


@pytest.mark.slow
def test_spectrum_error_decreases_with_n_d():
    rows = ref.nd_sweep([100, 2200])
    assert rows[1]["err_lambda"] < rows[0]["err_lambda"]
