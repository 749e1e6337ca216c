"""
Configuration file for the evgraph event-graph GCN engine
Contains all constants, defaults, and configuration parameters
"""

# Normalisation Configuration
SUPPORTED_BETAS = (128, 256)
DEFAULT_BETA = 128
DEFAULT_TIME_WINDOW_US = 100_000
# Hardware-supported (beta, TIME_WINDOW) pairs
SUPPORTED_WINDOW_CONFIGS = {
    128: 100_000,
    256: 50_000,
}

# Graph Generation
DEFAULT_RADIUS = 3
HW_RADIUS = 3  # the only radius the hardware front end implements
FRONT_END_CYCLES_PER_EVENT = 15  # NM: 15 reads on one port, 14 reads + 1 write on the other
ASYNC_CONV_CYCLES_PER_EVENT = 15
MAX_CANDIDATES_PRE_POOL = 29
MAX_CANDIDATES_POST_POOL = 17

# Clock and Pipeline
DEFAULT_CLOCK_HZ = 200_000_000
DEFAULT_FIFO_DEPTH = 8192
SYNC_CONV_CYCLES_PER_ITERATION = 9  # 18 vectors, two processed per cycle
# Fixed register/requantisation latency across the synchronous stages, calibrated
# against the reported per-event latencies (130 cycles at 200 MHz = 0.65 us)
PIPELINE_OVERHEAD_CYCLES = 130
PS_HEAD_LATENCY_US = 0.0

# Model Variants (per-layer output dims Conv1..Conv5)
MODEL_VARIANTS = {
    'S': (16, 32, 32, 32, 32),
    'B': (16, 32, 32, 64, 64),
    'L': (16, 32, 64, 64, 128),
}
VARIANT_NAMES = {
    'S': 'Small',
    'B': 'Base',
    'L': 'Large',
}
INPUT_ATTRIBUTE_DIM = 1  # polarity
POSITION_DIM = 3
POOL_SIZES = (4, 2)  # 3D MaxPool1 4x4x4, 3D MaxPool2 2x2x2
POOLOUT_GRID = 4
PREDICTIONS_PER_WINDOW = 4
WARMUP_PREDICTIONS = 3
DEFAULT_NUM_CLASSES = 2

# Quantisation
ACTIVATION_MIN_VALUE = 0
ACTIVATION_MAX_VALUE = 255
WEIGHT_MIN_VALUE = -128
WEIGHT_MAX_VALUE = 127
MAX_REQUANT_SHIFT = 62
BIAS_MIN_VALUE = -(1 << 31)
BIAS_MAX_VALUE = (1 << 31) - 1
REQUANT_MULTIPLIER_LIMIT = 1 << 31
DEFAULT_ZERO_POINT = 16
DEFAULT_REQUANT_SHIFT = 24
ROUNDING_MODE = "half-away-from-zero"

# Event File Formats
EVT_MAGIC = b"EVT1"
EVT_HEADER_FORMAT = "<4sHHII"  # magic, W, H, T_us, record count
EVT_HEADER_SIZE = 16
EVT_RECORD_SIZE = 9  # u16 x, u16 y, u32 t_us, u8 p
EVT_U16_MAX = 0xFFFF
EVT_U32_MAX = 0xFFFFFFFF

# Weight File Format
WEIGHT_FORMAT_VERSION = "efw:v1"
WEIGHT_BLOB_SUFFIX = ".bin"

# Synthetic Stimulus
SYNTH_PATTERNS = ("moving-edge", "random-uniform", "burst")
SYNTH_EDGE_JITTER_PX = 2
SYNTH_BURST_COUNT = 5
SYNTH_BURST_SPREAD_PX = 6

# Dataset Profiles (resolution, window, measured event rates)
DATASET_PROFILES = {
    'ncars': {'width': 120, 'height': 100, 'time_window_us': 100_000, 'beta': 128,
              'rate_meps': 0.59, 'classes': 2},
    'ncaltech101': {'width': 240, 'height': 180, 'time_window_us': 50_000, 'beta': 256,
                    'rate_meps': 1.35, 'classes': 100},
    'cifar10dvs': {'width': 128, 'height': 128, 'time_window_us': 100_000, 'beta': 128,
                   'rate_meps': 0.34, 'classes': 10},
    'mnistdvs': {'width': 128, 'height': 128, 'time_window_us': 100_000, 'beta': 128,
                 'rate_meps': 0.063, 'classes': 10},
}

# Environment
CONFIG_ENV_VAR = "EVGRAPH_CONFIG"
LOG_LEVEL_ENV_VAR = "EVGRAPH_LOG_LEVEL"
MODEL_CONFIG_DIR = "model_configs"

# Logging Configuration
LOG_LEVEL = "INFO"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# Exit Codes
EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_INPUT_ERROR = 2
EXIT_MODEL_ERROR = 3
EXIT_PLANNING_ERROR = 4

# Report Formats
REPORT_FORMATS = ("human", "kv", "json")
STATS_CSV_COLUMNS = ['layer', 'N', 'E', 'K', 'flops_mlp', 'flops_aggr', 'flops_updt', 'flops_tot']
