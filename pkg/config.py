import os
from dataclasses import dataclass, field
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

BASE_DIR = os.path.dirname(os.path.abspath(__file__))

# Dataset Configuration
DATA_DIR = os.environ.get("PQCBENCH_DATA_DIR", os.path.join(BASE_DIR, "data"))
SHIPPED_CALIBRATION_PATH = os.path.join(DATA_DIR, "table2_overheads.csv")
SHIPPED_RESOURCES_PATH = os.path.join(DATA_DIR, "table1_resources.csv")
CALIBRATION_PATH = os.environ.get("PQCBENCH_CALIBRATION", SHIPPED_CALIBRATION_PATH)
RESOURCES_PATH = os.environ.get("PQCBENCH_RESOURCES", SHIPPED_RESOURCES_PATH)
OUTPUT_DIR = os.environ.get("PQCBENCH_OUTPUT_DIR", "out")

# Benchmark Configuration
BENCH_RUNS = int(os.environ.get("PQCBENCH_RUNS", "1000"))
DEFAULT_PLATFORM = os.environ.get("PQCBENCH_PLATFORM", "VC709")

# KAT Configuration
KAT_CASES = int(os.environ.get("PQCBENCH_KAT_CASES", "100"))
KAT_WORKERS = int(os.environ.get("PQCBENCH_KAT_WORKERS", "1"))
# entropy_input[i] = i, as in the NIST generator
DEFAULT_KAT_ENTROPY = bytes(range(48))

# Cache Configuration
EXPANSION_CACHE_SIZE = int(os.environ.get("PQCBENCH_EXPANSION_CACHE", "32"))

# Logging Configuration
LOG_LEVEL = os.environ.get("PQCBENCH_LOG_LEVEL", "INFO").upper()
LOG_FILE = os.environ.get("PQCBENCH_LOG_FILE")
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - [%(funcName)s] %(message)s'

# Error Messages
ERROR_INVALID_COMBO = "Unknown scheme {family} level {level}. Registered: {combos}"
ERROR_INVALID_LENGTH = "{name} must be {expected} bytes, got {actual}"
ERROR_MISSING_DATASET = "Dataset file not found: {path}"
ERROR_UNKNOWN_PE = "PE {pe_name} on {platform} is not registered with the {backend} backend"

# Production Settings
DEBUG = os.environ.get("DEBUG", "False").lower() == "true"


@dataclass
class CliConfig:
    """Resolved options of one CLI invocation."""
    command: str
    family: Optional[str] = None
    level: Optional[int] = None
    operation: Optional[str] = None
    backend: str = "software"
    platform: str = DEFAULT_PLATFORM
    runs: int = BENCH_RUNS
    cases: int = KAT_CASES
    entropy: bytes = DEFAULT_KAT_ENTROPY
    input_path: Optional[str] = None
    output_dir: str = OUTPUT_DIR
    calibration_path: str = CALIBRATION_PATH
    resources_path: str = RESOURCES_PATH
    no_warmup: bool = False
    fixed_inputs: bool = False
    simulate_deadlock_ms: Optional[float] = None
    pretty: bool = False
    json_report: Optional[str] = None
    kinds: list = field(default_factory=list)
