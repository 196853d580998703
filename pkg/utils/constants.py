"""Constants file."""

import os
import sys
from pathlib import Path

APP_NAME = "RNS-CKKS Tools"


def _default_base_dir() -> Path:
    """Return the writable base directory for config/reports/logging."""
    override = os.getenv("RNS_CKKS_HOME")
    if override:
        return Path(override).expanduser().resolve()
    if getattr(sys, "frozen", False):
        return Path(sys.executable).resolve().parent
    return Path(__file__).resolve().parent.parent


BASE_DATA_DIR = _default_base_dir()
CONFIG_DIR = BASE_DATA_DIR / "config"
REPORTS_DIR = BASE_DATA_DIR / "reports"
ARTIFACTS_DIR = BASE_DATA_DIR / "artifacts"
LOGS_DIR = BASE_DATA_DIR / "logs"


def ensure_base_dirs() -> None:
    """Ensure base config/report/artifact/log directories exist without importing side effects."""
    BASE_DATA_DIR.mkdir(parents=True, exist_ok=True)
    for path in (CONFIG_DIR, REPORTS_DIR, ARTIFACTS_DIR, LOGS_DIR):
        path.mkdir(parents=True, exist_ok=True)


# ============= Scheme defaults =============

DEFAULT_SCALE_BITS = 40
DEFAULT_Q0_BITS = 60
# q_i close to the scale so a rescale brings the scale back to ~2^40
DEFAULT_QI_BITS = 40
DEFAULT_SPECIAL_BITS = 60
DEFAULT_ERROR_STDDEV = 3.2
DEFAULT_SEED = 1
MAX_PRIME_BITS = 60

# ============= Noise budgets (unit-magnitude messages) =============

FRESH_NOISE_BUDGET = 2.0**-25
ADDITIVE_NOISE_BUDGET = 2.0**-24
MULT_RELATIVE_ERROR_BOUND = 2.0**-12
ROTATION_NOISE_BUDGET = 2.0**-20
HDFT_ROUNDTRIP_BOUND = 2.0**-10
BOOTSTRAP_ROUNDTRIP_BOUND = 2.0**-8
MINKS_NOISE_FACTOR = 2.0
SCALE_MATCH_REL_TOL = 1e-6
SELFTEST_PASS_TRIALS = 4

# ============= Base conversion blocking =============

BCONV_BLOCK_ROWS = 6
BCONV_BLOCK_COLUMNS = 4 * 256

# ============= Stored plaintexts =============

STORED_PLAINTEXT_CACHE_SIZE = 256

# ============= Reports =============

REPORT_SCHEMA_VERSION = 1
REPORT_HEADER = f"# rns-ckks report v{REPORT_SCHEMA_VERSION}"
MIB = 1024 * 1024

__all__ = [
    "APP_NAME",
    "BASE_DATA_DIR",
    "CONFIG_DIR",
    "REPORTS_DIR",
    "ARTIFACTS_DIR",
    "LOGS_DIR",
    "ensure_base_dirs",
    "DEFAULT_SCALE_BITS",
    "DEFAULT_Q0_BITS",
    "DEFAULT_QI_BITS",
    "DEFAULT_SPECIAL_BITS",
    "DEFAULT_ERROR_STDDEV",
    "DEFAULT_SEED",
    "MAX_PRIME_BITS",
    "FRESH_NOISE_BUDGET",
    "ADDITIVE_NOISE_BUDGET",
    "MULT_RELATIVE_ERROR_BOUND",
    "ROTATION_NOISE_BUDGET",
    "HDFT_ROUNDTRIP_BOUND",
    "BOOTSTRAP_ROUNDTRIP_BOUND",
    "MINKS_NOISE_FACTOR",
    "SCALE_MATCH_REL_TOL",
    "SELFTEST_PASS_TRIALS",
    "BCONV_BLOCK_ROWS",
    "BCONV_BLOCK_COLUMNS",
    "STORED_PLAINTEXT_CACHE_SIZE",
    "REPORT_SCHEMA_VERSION",
    "REPORT_HEADER",
    "MIB",
]
