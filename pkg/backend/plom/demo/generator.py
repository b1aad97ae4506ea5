"""Generate synthetic training sets shaped like the reference applications"""

import logging

import numpy as np
from numpy.polynomial import legendre

from plom.models import GeneratorKind, GeneratorSpec, TrainingSet
from plom.rng import stream
from plom.services.data_model import whiten

logger = logging.getLogger(__name__)

# Named datasets used by the CLI and the tests
PRESETS = {
    "gaussian-reference": GeneratorSpec(kind=GeneratorKind.GAUSSIAN, nu=1, n_d=1200),
    "appli1-like": GeneratorSpec(kind=GeneratorKind.MULTICONNECTED, nu=9, n_d=400, n_patches=4),
    "appli2-like": GeneratorSpec(kind=GeneratorKind.CHAOS, nu=8, n_d=400),
    "appli3-like": GeneratorSpec(kind=GeneratorKind.HOMOGENEOUS, nu=46, n_d=560, latent_dim=6),
}

# Supports of the two uniform germs of the chaos expansion
GERM_SUPPORTS = [(0.0, 1.0), (-2.0, 3.0)]


def preset(name: str, seed: int | None = None) -> GeneratorSpec:
    """Copy of a named spec, optionally reseeded"""
    if name not in PRESETS:
        raise KeyError(f"Unknown preset {name!r}; choose from {sorted(PRESETS)}")
    spec = PRESETS[name]
    return spec if seed is None else spec.model_copy(update={"seed": seed})


def gaussian_samples(spec: GeneratorSpec, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((spec.nu, spec.n_d))


def multiconnected_samples(spec: GeneratorSpec, rng: np.random.Generator) -> np.ndarray:
    """
    Union of separated low-dimensional patches in R^nu.

    Patch p has intrinsic dimension 1 + p mod 3; points are a random smooth
    embedding of uniform latent coordinates, plus a small isotropic noise.
    """
    counts = np.full(spec.n_patches, spec.n_d // spec.n_patches)
    counts[: spec.n_d % spec.n_patches] += 1
    columns = []
    for p, count in enumerate(counts):
        dim = 1 + p % 3
        latent = rng.uniform(-1.0, 1.0, size=(dim, count))
        features = np.vstack([latent, np.sin(np.pi * latent), latent**2])
        embedding = rng.standard_normal((spec.nu, features.shape[0]))
        centre = 4.0 * rng.standard_normal((spec.nu, 1))
        columns.append(centre + embedding @ features + spec.noise * rng.standard_normal((spec.nu, count)))
    x = np.concatenate(columns, axis=1)
    return x[:, rng.permutation(spec.n_d)]


def chaos_terms(u: np.ndarray, degree: int) -> np.ndarray:
    """
    Normalized bivariate Legendre chaos on [-1, 1]^2, graded order.

    Row r (0-based) is term r + 1; degree 6 gives 28 terms.
    """
    rows = []
    for total in range(degree + 1):
        for first in range(total, -1, -1):
            second = total - first
            c1 = np.zeros(first + 1)
            c1[first] = np.sqrt(2 * first + 1)
            c2 = np.zeros(second + 1)
            c2[second] = np.sqrt(2 * second + 1)
            rows.append(legendre.legval(u[0], c1) * legendre.legval(u[1], c2))
    return np.array(rows)


def chaos_samples(spec: GeneratorSpec, rng: np.random.Generator) -> np.ndarray:
    """Selected terms of a degree-6 chaos with two uniform germs of different supports"""
    germs = np.array([rng.uniform(low, high, size=spec.n_d) for low, high in GERM_SUPPORTS])
    lows = np.array([low for low, _ in GERM_SUPPORTS])[:, None]
    highs = np.array([high for _, high in GERM_SUPPORTS])[:, None]
    u = 2.0 * (germs - lows) / (highs - lows) - 1.0
    terms = chaos_terms(u, spec.degree)
    return terms[[rank - 1 for rank in spec.ranks]]


def homogeneous_samples(spec: GeneratorSpec, rng: np.random.Generator) -> np.ndarray:
    """Many components driven by a few Gaussian latent factors"""
    latent = rng.standard_normal((spec.latent_dim, spec.n_d))
    features = np.vstack([latent, np.tanh(2.0 * latent), latent**2 - 1.0])
    mixing = rng.standard_normal((spec.nu, features.shape[0])) / np.sqrt(features.shape[0])
    return mixing @ features + max(spec.noise, 0.1) * rng.standard_normal((spec.nu, spec.n_d))


SAMPLERS = {
    GeneratorKind.GAUSSIAN: gaussian_samples,
    GeneratorKind.MULTICONNECTED: multiconnected_samples,
    GeneratorKind.CHAOS: chaos_samples,
    GeneratorKind.HOMOGENEOUS: homogeneous_samples,
}


def generate_raw(spec: GeneratorSpec) -> np.ndarray:
    rng = stream(spec.seed, "generator", spec.kind.value)
    return SAMPLERS[spec.kind](spec, rng)


def generate(spec: GeneratorSpec) -> TrainingSet:
    """Normalized training set (empirical mean 0, covariance identity)"""
    ts = whiten(generate_raw(spec))
    logger.info(f"Generated {spec.kind.value} training set: nu={ts.nu}, n_d={ts.n_d}, seed={spec.seed}")
    return ts
