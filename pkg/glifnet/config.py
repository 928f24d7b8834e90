import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Output root for relative experiment output directories
OUTPUT_ROOT = os.environ.get("GLIF_OUTPUT_ROOT", "runs")

# BLAS thread count; 1 keeps seeded runs bit-reproducible
NUM_THREADS = int(os.environ.get("GLIF_NUM_THREADS", "1"))
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, str(NUM_THREADS))

LOG_LEVEL = os.environ.get("GLIF_LOG_LEVEL", "INFO").upper()

# Spike nonlinearity
SURROGATE_HALF_WIDTH = 0.5

# Gating factors are drawn uniformly from this range at init
GATE_INIT_LOW = 0.4502
GATE_INIT_HIGH = 0.5498

# Initial primitive values per recipe (V_th, V_re, g, tau_exp, tau_lin)
INIT_PRESETS = {
    "cifar": {"v_th": 0.5, "v_re": 0.5, "g": 0.5, "tau_exp": 0.25, "tau_lin": 0.0625},
    "imagenet_t4": {"v_th": 0.5, "v_re": 0.5, "g": 0.5, "tau_exp": 0.25, "tau_lin": 0.0625},
    "imagenet_t6": {"v_th": 0.5, "v_re": 0.5, "g": 0.9, "tau_exp": 0.25, "tau_lin": 0.0625},
    # V_th and V_re of 1.0 sit on the sigmoid's open bound
    "cifar10_dvs": {"v_th": 1.0 - 1e-6, "v_re": 1.0 - 1e-6, "g": 0.9, "tau_exp": 0.5, "tau_lin": 0.03125},
}
DEFAULT_INIT_PRESET = "cifar"

# Optimizer defaults
DEFAULT_LR0 = 0.1
DEFAULT_MOMENTUM = 0.9
DEFAULT_WEIGHT_DECAY = 5e-5
DEFAULT_GATE_LR_SCALE = 0.1
DEFAULT_EPOCHS = 200
DEFAULT_BATCH_SIZE = 64
DEFAULT_WEIGHT_GAIN = 1.0

# Finite-difference gradient check
FD_STEP = 1e-6
FD_TOLERANCE = 1e-5
FD_KINK_MARGIN = 1e-4
FD_DENOM_FLOOR = 1e-3
FD_ROUNDOFF_STEP = 1e-9

# Dynamics lab
COSINE_MARGIN = 1e-3
HISTOGRAM_BINS = 20

# File formats
CHECKPOINT_FORMAT_VERSION = 1
EXPERIMENT_SCHEMA_VERSION = 1
TRACE_COLUMNS = ("t", "U", "S", "L", "I", "F", "g")
METRICS_COLUMNS = ("epoch", "lr", "train_loss", "train_acc", "eval_acc")
