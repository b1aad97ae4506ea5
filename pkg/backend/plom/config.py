"""Library configuration"""

import os
from pathlib import Path

# Output
BASE_DIR = Path(__file__).parent.parent
OUTPUT_DIR = Path(os.getenv("PLOM_OUTPUT_DIR", str(BASE_DIR / "runs")))
SCHEMA_VERSION = "1.0"
CSV_SIGNIFICANT_DIGITS = 17
BINARY_MAGIC = b"PLOM"

# Logging
LOG_LEVEL = os.getenv("PLOM_LOG_LEVEL", "INFO").upper()
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Workers and memory
MAX_THREADS = int(os.getenv("PLOM_THREADS", str(os.cpu_count() or 1)))
MEMORY_BUDGET_MB = float(os.getenv("PLOM_MEMORY_BUDGET_MB", "1024"))
ISDE_BLOCK_SIZE = 64  # realizations per RNG stream, independent of thread count
PLOM_BLOCK_SIZE = 16  # learned matrices per RNG stream
KERNEL_CHUNK_ENTRIES = 4_000_000  # largest pairwise intermediate (points x centres)

# Normalization tolerances
MEAN_TOLERANCE = 1e-8
COVARIANCE_TOLERANCE = 1e-6
EIGEN_CUTOFF = 1e-12  # relative to the largest PCA eigenvalue
ORTHONORMAL_TOLERANCE = 1e-10

# DMAPS
DEFAULT_JUMP_TARGET = 0.1
EPS_SEARCH_MIN = 1e-2
EPS_SEARCH_MAX = 1e4
EPS_SEARCH_GRID = 41

# ISDE (Table 2 defaults)
DEFAULT_KAPPA = 30.0
DEFAULT_N_SUBSTEPS = 1
DEFAULT_N_INSTANTS = 10
DEFAULT_N_MC = 2000

# Selection
DEFAULT_TAU_C = 0.002
ANGLE_METHOD = "principal"

# PLoM generator (Table 3 defaults)
DEFAULT_F0 = 4.0
DEFAULT_M0 = 30
DEFAULT_N_MCH = 100
DEFAULT_BETA1 = 0.001
DEFAULT_BETA2 = 0.05
DEFAULT_I2 = 20
DEFAULT_ERR_TOL = 1e-3
DEFAULT_MAX_ITER = 5000
DIVERGENCE_PATIENCE = 50
GAMMA_REGULARIZATION = 1e-10

# Information metrics
MI_SUBSAMPLE_CAP = 20_000
PAIRWISE_BLOCK_ROWS = 512

# Gaussian reference
QUADRATURE_NODES = 200
REFERENCE_ORDERS = 5
REFERENCE_ND_GRID = [100, 300, 400, 800, 1000, 1200, 1500, 1800, 2000, 2200]
REFERENCE_DELTA_T = 0.061796
REFERENCE_N_INSTANTS = 150
REFERENCE_INSTANT = 2
