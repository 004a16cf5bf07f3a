import logging
import os
from typing import Dict, List, Optional

import pandas as pd
from Crypto.Hash import SHA256

from config import DATA_DIR, ERROR_MISSING_DATASET
from errors import ConfigurationError, DataError

logger = logging.getLogger(__name__)

BASE_COLUMNS = ["Algorithm", "Platform", "Security Level", "Operation", "PE Name",
                "Functionality", "Frequency [MHz]"]
TABLE1_COLUMNS = BASE_COLUMNS + ["kLUTs", "kFFs", "BRAM", "DSPs"]
TABLE2_COLUMNS = BASE_COLUMNS + ["PE Start [ns]", "PE Wait [ns]", "PE Release [ns]", "Mean Duration [µs]"]

SHIPPED_ROWS = 24
# SHA-256 of the shipped files; see data/PROVENANCE.md
SHIPPED_DIGESTS: Dict[str, str] = {
    "table1_resources.csv": "10087c5733755813bfa7339e75974bb51961d544acbe9999e04ead749a2e7385",
    "table2_overheads.csv": "fc13dcb403bc76075afec025497591e88219e6f87c12122097112b613e200de8",
}


def file_digest(path: str) -> str:
    h = SHA256.new()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def shipped_name(path: str) -> Optional[str]:
    """Dataset name if `path` is one of the files shipped in the data directory."""
    name = os.path.basename(path)
    if name in SHIPPED_DIGESTS and os.path.realpath(os.path.dirname(path)) == os.path.realpath(DATA_DIR):
        return name
    return None


def load_table(path: str, columns: List[str]) -> pd.DataFrame:
    """Read a Table-1/Table-2 style CSV, enforcing headers and, for shipped files, the pin."""
    if not os.path.isfile(path):
        raise ConfigurationError(ERROR_MISSING_DATASET.format(path=path))

    name = shipped_name(path)
    if name is not None:
        digest = file_digest(path)
        if digest != SHIPPED_DIGESTS[name]:
            raise DataError(f"Shipped dataset {name} was modified (sha256 {digest})")

    try:
        df = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"Cannot read {path}: {str(e)}")

    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise DataError(f"{path} lacks columns: {', '.join(missing)}")
    if name is not None and len(df) != SHIPPED_ROWS:
        raise DataError(f"Shipped dataset {name} must hold {SHIPPED_ROWS} rows, found {len(df)}")

    logger.debug(f"Loaded {len(df)} rows from {path}")
    return df[columns]
