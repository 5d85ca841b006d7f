import math

DEFAULT_SHIFT_COST = 1.0
DEFAULT_BATCH_SIZE = 64
DEFAULT_MAX_PASSES = 64.0
DEFAULT_LOG_INTERVAL = 1.0

DEFAULT_SPECTRUM_PARAMS = {
    "cvar": 0.5,
    "extremile": 2.0,
    "esrm": 1.0,
}

HARD_SPECTRUM_PARAMS = {
    "cvar": 0.25,
    "extremile": 2.5,
    "esrm": math.exp(2.0),
}

LEARNING_RATE_GRID = [
    1e-4, 3e-4,
    1e-3, 3e-3,
    1e-2, 3e-2,
    1e-1, 3e-1,
    1e0, 3e0,
]

# SaddleSAGA heuristic: dual step is this many times n smaller than the primal one.
DUAL_RATE_DIVISOR = 10

SPECTRUM_SUM_TOL = 1e-12
WEIGHTS_SUM_TOL = 1e-8
WEIGHTS_NEGATIVE_TOL = 1e-10
SORTED_REL_TOL = 1e-12

REFERENCE_TOL = 1e-10
REFERENCE_MAX_ITER = 100_000

# A run whose objective exceeds this multiple of its initial value is reported as diverged.
DIVERGENCE_FACTOR = 1e3

METRICS_COLUMNS = ["optimizer", "seed", "pass", "objective", "suboptimality", "wall_time_s"]
FLOAT_FORMAT = "%.17g"

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_DATA_ERROR = 2
EXIT_SOLVER_FAILURE = 3
