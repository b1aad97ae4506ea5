"""Domain types shared by the services, the commands and the reports"""

from enum import Enum
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from plom.config import (
    ANGLE_METHOD,
    DEFAULT_BETA1,
    DEFAULT_BETA2,
    DEFAULT_ERR_TOL,
    DEFAULT_F0,
    DEFAULT_I2,
    DEFAULT_JUMP_TARGET,
    DEFAULT_KAPPA,
    DEFAULT_M0,
    DEFAULT_MAX_ITER,
    DEFAULT_N_INSTANTS,
    DEFAULT_N_MC,
    DEFAULT_N_MCH,
    DEFAULT_N_SUBSTEPS,
    DEFAULT_TAU_C,
    MI_SUBSAMPLE_CAP,
)


class ArrayModel(BaseModel):
    """Base for immutable models holding numpy arrays"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def _as_matrix(value: Any, name: str) -> np.ndarray:
    array = np.asarray(value, dtype=float)
    if array.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} contains non-finite entries")
    return array


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------


class RawDataset(ArrayModel):
    """Realizations of X, one per column (n_x rows, n_d columns)"""

    x: np.ndarray

    @field_validator("x", mode="before")
    @classmethod
    def check_x(cls, value: Any) -> np.ndarray:
        array = _as_matrix(value, "x")
        if array.shape[1] < 2:
            raise ValueError(f"need at least 2 realizations, got {array.shape[1]}")
        return array

    @property
    def n_x(self) -> int:
        return int(self.x.shape[0])

    @property
    def n_d(self) -> int:
        return int(self.x.shape[1])


class PcaReduction(ArrayModel):
    mean: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    nu: int
    err: float

    @property
    def n_x(self) -> int:
        return int(self.mean.shape[0])


class TrainingSet(ArrayModel):
    """Normalized realizations [eta_d], nu rows and n_d columns"""

    eta: np.ndarray

    @field_validator("eta", mode="before")
    @classmethod
    def check_eta(cls, value: Any) -> np.ndarray:
        array = _as_matrix(value, "eta")
        if array.shape[0] < 1 or array.shape[1] < 1:
            raise ValueError(f"eta must be non-empty, got shape {array.shape}")
        return array

    @property
    def nu(self) -> int:
        return int(self.eta.shape[0])

    @property
    def n_d(self) -> int:
        return int(self.eta.shape[1])


class NormalizationDiagnostics(BaseModel):
    mean_norm: float
    cov_dev: float
    mean_ok: bool
    cov_ok: bool

    @property
    def passed(self) -> bool:
        return self.mean_ok and self.cov_ok


# ---------------------------------------------------------------------------
# GKDE and ISDE
# ---------------------------------------------------------------------------


class BandwidthSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    s: float
    s_hat: float
    ratio: float


class GkdeModel(ArrayModel):
    """Gaussian KDE of the training measure

    Centres are the scaled training columns (s_hat/s) eta^j, all with width s_hat.
    """

    ts: TrainingSet
    bw: BandwidthSet

    @property
    def centres(self) -> np.ndarray:
        return self.bw.ratio * self.ts.eta

    @property
    def nu(self) -> int:
        return self.ts.nu

    @property
    def n_d(self) -> int:
        return self.ts.n_d


class IsdeConfig(BaseModel):
    """Euler discretization of the ISDE

    delta_t is always s_hat**2 / kappa; use `from_bandwidths` to build one.
    """

    model_config = ConfigDict(frozen=True)

    kappa: float = Field(default=DEFAULT_KAPPA, gt=0)
    delta_t: float = Field(gt=0)
    n_s: int = Field(default=DEFAULT_N_SUBSTEPS, ge=1)
    n_instants: int = Field(default=DEFAULT_N_INSTANTS, ge=1)
    n_mc: int = Field(default=DEFAULT_N_MC, ge=1)
    seed: int = 0
    noise: bool = True
    drift: bool = True

    @classmethod
    def from_bandwidths(
        cls,
        bw: BandwidthSet,
        kappa: float | None = None,
        delta_t: float | None = None,
        **kwargs: Any,
    ) -> "IsdeConfig":
        """Build from kappa (delta_t = s_hat^2/kappa) or from an explicit delta_t (kappa derived)"""
        if delta_t is not None:
            kappa = bw.s_hat**2 / delta_t
        else:
            kappa = DEFAULT_KAPPA if kappa is None else kappa
            delta_t = bw.s_hat**2 / kappa
        return cls(kappa=kappa, delta_t=delta_t, **kwargs)

    @property
    def delta_small(self) -> float:
        """Euler substep dt = delta_t / n_s"""
        return self.delta_t / self.n_s

    @property
    def horizon(self) -> float:
        return self.n_instants * self.delta_t


class IsdeTrajectorySet(ArrayModel):
    """Retained ISDE states and their per-entry statistics

    y has shape (n_mc, N, nu, n_d) when materialized and is None in streaming
    mode; the blocks can then be regenerated from (model, cfg).
    """

    model: GkdeModel
    cfg: IsdeConfig
    y: np.ndarray | None = None
    mean_n: np.ndarray
    sigma_n: np.ndarray

    @property
    def materialized(self) -> bool:
        return self.y is not None

    @property
    def n_instants(self) -> int:
        return int(self.mean_n.shape[0])

    def time(self, n: int) -> float:
        return n * self.cfg.delta_t


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


class KernelKind(str, Enum):
    TRANSIENT_EXACT = "transient-exact"
    TRANSIENT_CONNECTED = "transient-connected"
    DMAPS = "dmaps"


class KernelMatrix(ArrayModel):
    """Normalized kernel [K] = [B]^{-1}[kernel]

    `kernel` is the unnormalized matrix and `b` the diagonal of [B]; `k` is
    their quotient row by row.
    """

    kind: KernelKind
    kernel: np.ndarray
    b: np.ndarray
    instant: int = 0
    t: float = 0.0
    eps: float | None = None

    @property
    def k(self) -> np.ndarray:
        return self.kernel / self.b[:, None]

    @property
    def n_d(self) -> int:
        return int(self.kernel.shape[0])


class KernelBasis(ArrayModel):
    """Reduced eigenbasis [g] = [B]^{-1/2}[phi] truncated to m columns"""

    kind: KernelKind | Literal["full", "file"]
    eigvals: np.ndarray
    eigvecs: np.ndarray
    phi: np.ndarray | None = None
    b: np.ndarray | None = None
    m: int
    instant: int = 0
    t: float = 0.0
    eps_dm: float | None = None
    jump: float | None = None
    jump_ok: bool = True
    n_negative: int = 0

    @property
    def n_d(self) -> int:
        return int(self.eigvecs.shape[0])


# ---------------------------------------------------------------------------
# Information metrics and selection
# ---------------------------------------------------------------------------


class SampleSet(ArrayModel):
    """Independent realizations (nu x N) prepared for the GKDE estimators"""

    x: np.ndarray
    sigmas: np.ndarray
    s: float
    n_original: int

    @property
    def nu(self) -> int:
        return int(self.x.shape[0])

    @property
    def n(self) -> int:
        return int(self.x.shape[1])

    @property
    def subsampled(self) -> bool:
        return self.n < self.n_original


class InstantRecord(BaseModel):
    n: int
    t: float
    gamma_deg: float
    d2: float
    d2_over_nu: float
    kl: float
    entropy: float
    mi: float
    admissible: bool
    n_negative: int = 0


class OrderingFlag(str, Enum):
    HOLDS = "holds"
    ASSUMPTION_FAILED = "assumption_failed"
    NOT_IMPROVED = "not_improved"


class SelectionReport(BaseModel):
    records: list[InstantRecord]
    tau_c: float
    angle_method: str
    admissible: list[int]
    n_opt: int | None = None
    fell_back_to_dmaps: bool = False
    mi_h: float | None = None
    mi_db: float | None = None
    mi_tb_opt: float | None = None
    chi_opt: float | None = None
    chi_valid: bool | None = None
    mi_norm_h: float | None = None
    mi_norm_db: float | None = None
    mi_norm_tb_opt: float | None = None
    ordering: OrderingFlag | None = None
    mi_subsample_cap: int = MI_SUBSAMPLE_CAP


# ---------------------------------------------------------------------------
# PLoM generator
# ---------------------------------------------------------------------------


class ConstraintMode(str, Enum):
    NONE = "none"
    DIAGONAL = "diagonal"
    FULL = "full"


class PlomConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    f0: float = Field(default=DEFAULT_F0, gt=0)
    dt_sv: float = Field(gt=0)
    m0: int = Field(default=DEFAULT_M0, ge=1)
    n_mch: int = Field(default=DEFAULT_N_MCH, ge=1)
    constraints: ConstraintMode = ConstraintMode.NONE
    beta1: float = Field(default=DEFAULT_BETA1, gt=0)
    beta2: float = Field(default=DEFAULT_BETA2, gt=0)
    i2: int = Field(default=DEFAULT_I2, ge=2)
    err_tol: float = Field(default=DEFAULT_ERR_TOL, gt=0)
    max_iter: int = Field(default=DEFAULT_MAX_ITER, ge=1)
    warm_start: bool = False
    seed: int = 0
    s_hat: float = Field(gt=0)

    @model_validator(mode="after")
    def check_ranges(self) -> "PlomConfig":
        if self.f0 >= 4.0 / self.s_hat:
            raise ValueError(f"f0={self.f0} must be below 4/s_hat={4.0 / self.s_hat:.6g}")
        if not self.beta1 < self.beta2 <= 1.0:
            raise ValueError(f"relaxation needs beta1 < beta2 <= 1, got {self.beta1}, {self.beta2}")
        return self

    def relaxation(self, i: int) -> float:
        """alpha_i, linear from beta1 to beta2 over the first i2 iterations (1-based)"""
        if i >= self.i2:
            return self.beta2
        return self.beta1 + (self.beta2 - self.beta1) * (i - 1) / (self.i2 - 1)


class LearnedSet(ArrayModel):
    eta_ar: np.ndarray
    n_mch: int
    lam: np.ndarray
    err_trace: list[float] = Field(default_factory=list)
    alpha_trace: list[float] = Field(default_factory=list)
    i_last: int = 0
    converged: bool = True
    basis_kind: str = "dmaps"

    @property
    def n_ar(self) -> int:
        return int(self.eta_ar.shape[1])

    def matrices(self, n_d: int) -> np.ndarray:
        """Learned matrices as (n_mch, nu, n_d)"""
        nu = self.eta_ar.shape[0]
        return self.eta_ar.reshape(nu, self.n_mch, n_d).transpose(1, 0, 2)


# ---------------------------------------------------------------------------
# Synthetic data and run configuration
# ---------------------------------------------------------------------------


class GeneratorKind(str, Enum):
    GAUSSIAN = "gaussian"
    MULTICONNECTED = "multiconnected-manifold"
    CHAOS = "chaos-expansion"
    HOMOGENEOUS = "high-dim-homogeneous"


class GeneratorSpec(BaseModel):
    kind: GeneratorKind = GeneratorKind.GAUSSIAN
    nu: int = Field(default=1, ge=1)
    n_d: int = Field(default=1200, ge=2)
    seed: int = 0
    n_patches: int = Field(default=4, ge=1)
    noise: float = Field(default=0.01, ge=0)
    degree: int = Field(default=6, ge=1)
    ranks: list[int] = Field(default_factory=lambda: [2, 3, 6, 8, 12, 13, 17, 19])
    latent_dim: int = Field(default=4, ge=1)

    @model_validator(mode="after")
    def check_chaos_ranks(self) -> "GeneratorSpec":
        if self.kind == GeneratorKind.CHAOS:
            n_terms = (self.degree + 1) * (self.degree + 2) // 2
            if any(rank < 1 or rank > n_terms for rank in self.ranks):
                raise ValueError(f"chaos ranks must lie in 1..{n_terms}")
            if self.nu != len(self.ranks):
                raise ValueError(f"chaos nu={self.nu} must equal the number of ranks ({len(self.ranks)})")
        return self


class InputSection(BaseModel):
    path: str | None = None
    format: Literal["auto", "csv", "bin"] = "auto"
    preset: str | None = None


class PcaSection(BaseModel):
    eps_pca: float = Field(default=1e-6, gt=0, lt=1)
    skip: bool = False


class DmapsSection(BaseModel):
    jump_target: float = Field(default=DEFAULT_JUMP_TARGET, gt=0, lt=1)


class IsdeSection(BaseModel):
    kappa: float = Field(default=DEFAULT_KAPPA, ge=1)
    n_instants: int = Field(default=DEFAULT_N_INSTANTS, ge=1)
    n_s: int = Field(default=DEFAULT_N_SUBSTEPS, ge=1)
    n_mc: int = Field(default=DEFAULT_N_MC, ge=2)


class SelectionSection(BaseModel):
    tau_c: float = Field(default=DEFAULT_TAU_C, gt=0)
    angle_method: str = ANGLE_METHOD

    @field_validator("angle_method")
    @classmethod
    def check_angle_method(cls, value: str) -> str:
        if value not in ("principal", "normalized"):
            raise ValueError(f"angle_method must be 'principal' or 'normalized', got {value!r}")
        return value


class PlomSection(BaseModel):
    f0: float = Field(default=DEFAULT_F0, gt=0)
    dt_sv: float | None = Field(default=None, gt=0)
    m0: int = Field(default=DEFAULT_M0, ge=1)
    n_mch: int = Field(default=DEFAULT_N_MCH, ge=1)
    constraints: ConstraintMode = ConstraintMode.NONE
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    i2: int = Field(default=DEFAULT_I2, ge=2)
    err_tol: float = Field(default=DEFAULT_ERR_TOL, gt=0)
    max_iter: int = Field(default=DEFAULT_MAX_ITER, ge=1)
    warm_start: bool = False


class MetricsSection(BaseModel):
    subsample_cap: int = Field(default=MI_SUBSAMPLE_CAP, ge=2)


class RunSection(BaseModel):
    seed: int = 0
    output_dir: str | None = None


class RunConfig(BaseModel):
    """Everything `plom run` needs, one section per INI block"""

    input: InputSection = Field(default_factory=InputSection)
    pca: PcaSection = Field(default_factory=PcaSection)
    dmaps: DmapsSection = Field(default_factory=DmapsSection)
    isde: IsdeSection = Field(default_factory=IsdeSection)
    selection: SelectionSection = Field(default_factory=SelectionSection)
    plom: PlomSection = Field(default_factory=PlomSection)
    metrics: MetricsSection = Field(default_factory=MetricsSection)
    run: RunSection = Field(default_factory=RunSection)

    @model_validator(mode="after")
    def check_input(self) -> "RunConfig":
        if self.input.path is None and self.input.preset is None:
            raise ValueError("[input] needs either path or preset")
        return self
