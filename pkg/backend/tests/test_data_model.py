import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

from plom.exceptions import DegenerateData, InputError, ShapeMismatch
from plom.models import RawDataset, TrainingSet
from plom.services import data_model
from plom.storage import write_matrix


@pytest.fixture
def rank3_raw(rng):
    mixing = rng.standard_normal((5, 3))
    latent = rng.standard_normal((3, 200)) * np.array([[3.0], [1.0], [0.3]])
    return RawDataset(x=mixing @ latent + 2.0)


def test_pca_keeps_the_informative_components(rank3_raw):
    pca, ts = data_model.pca_reduce(rank3_raw, eps_pca=1e-6)

    assert pca.nu == 3
    assert ts.eta.shape == (3, 200)
    assert pca.err <= 1e-6
    assert data_model.validate_normalization(ts).passed


def test_pca_truncates_when_eps_is_large(rank3_raw):
    pca, ts = data_model.pca_reduce(rank3_raw, eps_pca=0.2)
    assert pca.nu < 3
    assert ts.nu == pca.nu


def test_reconstruct_inverts_a_lossless_reduction(rank3_raw):
    pca, ts = data_model.pca_reduce(rank3_raw, eps_pca=1e-6)
    assert_allclose(data_model.reconstruct(pca, ts.eta), rank3_raw.x, atol=1e-8)


def test_reconstruct_checks_rows(rank3_raw):
    pca, _ = data_model.pca_reduce(rank3_raw, eps_pca=1e-6)
    with pytest.raises(ShapeMismatch):
        data_model.reconstruct(pca, np.zeros((2, 4)))


def test_constant_dataset_is_degenerate():
    with pytest.raises(DegenerateData):
        data_model.pca_reduce(RawDataset(x=np.full((3, 10), 7.0)), eps_pca=1e-6)


@pytest.mark.parametrize("eps_pca", [0.0, 1.0, -0.1])
def test_eps_pca_range(rank3_raw, eps_pca):
    with pytest.raises(InputError):
        data_model.pca_reduce(rank3_raw, eps_pca=eps_pca)


def test_energy_errors_decrease(rank3_raw):
    errors = data_model.energy_errors(rank3_raw)
    assert errors.shape == (5,)
    assert np.all(np.diff(errors) <= 1e-12)
    assert errors[-1] == pytest.approx(0.0, abs=1e-10)


def test_whiten_normalizes(rng):
    x = rng.standard_normal((4, 100)) * 5.0 + 1.0
    diagnostics = data_model.validate_normalization(data_model.whiten(x))
    assert diagnostics.mean_ok
    assert diagnostics.cov_ok


def test_doubled_set_deviates_by_three_root_nu(rng):
    ts = data_model.whiten(rng.standard_normal((4, 100)))
    diagnostics = data_model.validate_normalization(TrainingSet(eta=2.0 * ts.eta))
    assert diagnostics.cov_dev == pytest.approx(3.0 * np.sqrt(4), rel=1e-8)
    assert not diagnostics.cov_ok
    assert diagnostics.mean_ok


def test_whiten_rejects_singular_covariance(rng):
    row = rng.standard_normal(50)
    with pytest.raises(DegenerateData):
        data_model.whiten(np.vstack([row, 2.0 * row]))


def test_single_column_cannot_be_validated():
    diagnostics = data_model.validate_normalization(TrainingSet(eta=np.zeros((2, 1))))
    assert diagnostics.cov_dev == float("inf")
    assert not diagnostics.passed


def test_load_training_set_with_pca(tmp_path, rank3_raw):
    path = write_matrix(tmp_path / "x.csv", rank3_raw.x)
    pca, ts = data_model.load_training_set(path)
    assert pca is not None
    assert ts.nu == 3


def test_load_training_set_skip_pca_warns_when_not_normalized(tmp_path, rng, caplog):
    path = write_matrix(tmp_path / "eta.bin", 3.0 * rng.standard_normal((2, 30)))
    with caplog.at_level(logging.WARNING):
        pca, ts = data_model.load_training_set(path, skip_pca=True)
    assert pca is None
    assert ts.eta.shape == (2, 30)
    assert "not normalized" in caplog.text


def test_single_realization_is_an_input_error(tmp_path):
    path = write_matrix(tmp_path / "one.csv", np.ones((3, 1)))
    with pytest.raises(InputError):
        data_model.load_raw(path)
