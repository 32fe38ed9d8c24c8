import os
from dotenv import load_dotenv

load_dotenv()

# Discretization
DEFAULT_CELLS = int(os.getenv("BEAMCHAIN_CELLS", 200))
MIN_CELLS = 8
MAX_DENSE_DIM = 5000

# Tolerances
TOL_PSD = float(os.getenv("BEAMCHAIN_TOL_PSD", 1e-10))
TOL_BISECT = float(os.getenv("BEAMCHAIN_TOL_BISECT", 1e-9))
RANK_TOL = 1e-12
KERNEL_TOL = 1e-10
KERNEL_WARN_TOL = 1e-6
STABILITY_TOL = 1e-6
ROUNDING_ULPS = 256

# Resolvent sweep
DEFAULT_BETA_MIN = 0.0
DEFAULT_BETA_MAX = float(os.getenv("BEAMCHAIN_BETA_MAX", 200.0))
DEFAULT_SWEEP_SAMPLES = int(os.getenv("BEAMCHAIN_SWEEP_SAMPLES", 256))
MIN_SWEEP_SAMPLES = 16
SWEEP_WORKERS = int(os.getenv("BEAMCHAIN_SWEEP_WORKERS", 4))
REFINE_PEAKS = 3

# Time stepping
DT_CAP = float(os.getenv("BEAMCHAIN_DT_CAP", 1e-2))
MAX_STEPS = int(1e7)
MAX_RECORDED_SAMPLES = int(os.getenv("BEAMCHAIN_MAX_SAMPLES", 4000))
DECAY_WINDOW_START = 0.1
MIN_FIT_SAMPLES = 50
DEFAULT_T_FACTOR = 5.0
DEFAULT_T_FALLBACK = 50.0
RANDOM_SEED = int(os.getenv("BEAMCHAIN_SEED", 0))

# Output
LOG_LEVEL = os.getenv("BEAMCHAIN_LOG_LEVEL", "WARNING")
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
DEFAULT_OUTPUT_DIR = os.getenv("BEAMCHAIN_OUT", "results")
