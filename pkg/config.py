import os

# Numerical tolerances
NODE_EPS_REL = 1e-13          # near-node guard, relative to the node span
NODE_GAP = 1e-9               # minimum |alpha - z| between source and worker nodes
FORM_RTOL = 1e-12             # blended form vs weights form agreement

# Coded computing defaults (Scenario 1 of the desk experiments)
DEFAULT_WORKERS = 20
DEFAULT_PARTS = 10            # m + 1
DEFAULT_STRAGGLERS = 3
DEFAULT_DEGREE = 2
DEFAULT_NODE_SCHEME = "chebyshev2"
DEFAULT_BLOCK_SHAPE = (100, 100)

# Simulation defaults
DEFAULT_TRIALS = 50
DEFAULT_SEED = 2025
RNG_ALGORITHM = "PCG64"
DEFAULT_FLOP_SECONDS = 1e-9   # base_compute = c * s * t^2
DEFAULT_JITTER = 0.1          # non-straggler slowdown, fraction of base
DEFAULT_OVERHEAD = 0.0        # dispatch overhead, multiple of base
DEFAULT_EXTRA_DIST = "uniform"
DEFAULT_EXTRA_PARAMS = (5.0, 15.0)   # straggler extra, multiples of base

# Linear regression defaults
DEFAULT_LR_ITERATIONS = 100
POWER_ITERATION_STEPS = 20
SYNTHETIC_PERTURBATION = 0.05
SYNTHETIC_NOISE = 1.0

# Sin experiment defaults
SIN_INTERVAL = (-8.0, 8.0)
SIN_GRID = 2000

# Output artifacts
TRIALS_CSV = "trials.csv"
CDF_CSV = "cdf.csv"
MSE_TABLE_CSV = "mse_table.csv"
TRAINING_LOG_CSV = "training_log.csv"
MANIFEST_JSON = "run_manifest.json"
SCENARIO_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "scenarios")

# Environment overrides
SEED_ENV_VAR = "BRI_SEED"
LOG_LEVEL = os.environ.get("BRI_LOG_LEVEL", "INFO")
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def env_seed():
    """Seed from BRI_SEED, or None when unset"""
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw.strip() == "":
        return None
    return int(raw)
