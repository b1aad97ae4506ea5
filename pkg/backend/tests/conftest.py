"""Shared fixtures: small normalized training sets, GKDE models and output directories"""

import numpy as np
import pytest

from plom.demo.generator import generate
from plom.models import GeneratorKind, GeneratorSpec, IsdeConfig
from plom.parallel import get_thread_cap, set_thread_cap
from plom.services import gkde, isde
from plom.storage import ArtifactStore


@pytest.fixture
def gaussian_ts():
    return generate(GeneratorSpec(kind=GeneratorKind.GAUSSIAN, nu=2, n_d=40, seed=3))


@pytest.fixture
def manifold_ts():
    return generate(GeneratorSpec(kind=GeneratorKind.MULTICONNECTED, nu=3, n_d=60, n_patches=2, seed=5))


@pytest.fixture
def gaussian_model(gaussian_ts):
    return gkde.build_model(gaussian_ts)


@pytest.fixture
def manifold_model(manifold_ts):
    return gkde.build_model(manifold_ts)


@pytest.fixture
def small_traj(gaussian_model):
    cfg = IsdeConfig.from_bandwidths(gaussian_model.bw, kappa=30, n_instants=3, n_mc=24, seed=11)
    return isde.simulate(gaussian_model, cfg)


@pytest.fixture
def store(tmp_path):
    return ArtifactStore(tmp_path / "run")


@pytest.fixture
def thread_cap():
    """Lets a test change the worker cap and restores it afterwards"""
    previous = get_thread_cap()
    yield set_thread_cap
    set_thread_cap(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
