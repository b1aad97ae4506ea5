import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

from plom.demo.generator import PRESETS, chaos_terms, generate, generate_raw, preset
from plom.models import GeneratorKind, GeneratorSpec
from plom.services import data_model, info_metrics


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_are_normalized(name):
    ts = generate(preset(name, seed=1))
    spec = PRESETS[name]
    assert ts.eta.shape == (spec.nu, spec.n_d)
    assert data_model.validate_normalization(ts).passed


def test_seed_determinism():
    spec = GeneratorSpec(kind=GeneratorKind.HOMOGENEOUS, nu=6, n_d=50, seed=4)
    assert_array_equal(generate(spec).eta, generate(spec).eta)
    assert not np.array_equal(generate_raw(spec), generate_raw(spec.model_copy(update={"seed": 5})))


def test_chaos_has_28_orthonormal_terms(rng):
    u = rng.uniform(-1.0, 1.0, size=(2, 200_000))
    terms = chaos_terms(u, 6)
    assert terms.shape == (28, 200_000)
    assert_allclose(terms @ terms.T / u.shape[1], np.eye(28), atol=0.05)


def test_chaos_ranks_select_rows():
    spec = preset("appli2-like")
    assert spec.ranks == [2, 3, 6, 8, 12, 13, 17, 19]
    assert generate_raw(spec).shape == (8, 400)


def test_chaos_spec_validation():
    with pytest.raises(ValidationError):
        GeneratorSpec(kind=GeneratorKind.CHAOS, nu=3)
    with pytest.raises(ValidationError):
        GeneratorSpec(kind=GeneratorKind.CHAOS, nu=2, ranks=[1, 29])


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset("appli9")


def test_multiconnected_set_is_more_dependent_than_a_gaussian():
    manifold = generate(preset("appli1-like", seed=2))
    gaussian = generate(GeneratorSpec(kind=GeneratorKind.GAUSSIAN, nu=9, n_d=400, seed=2))
    mi_manifold = info_metrics.mutual_information(info_metrics.sample_set(manifold.eta))
    mi_gaussian = info_metrics.mutual_information(info_metrics.sample_set(gaussian.eta))
    assert mi_manifold > mi_gaussian
