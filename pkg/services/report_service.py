"""Analysis arithmetic over the resource/overhead datasets and figure-data emission.

Figures are emitted as data series (CSV plus JSON), never rendered.
"""
import json
import logging
import os
from decimal import ROUND_HALF_UP, Decimal
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from config import RESOURCES_PATH
from errors import DataError, InvalidArgumentError
from models import BenchRecord, Family, Operation, Platform, ResourceRecord
from services.bench_service import records_frame
from services.device_service import Calibration, modeled_mean_us
from utils.datasets import TABLE1_COLUMNS, TABLE2_COLUMNS, load_table

# Configure logging
logger = logging.getLogger(__name__)

REPORT_KINDS = ("table1", "table2", "fig1", "fig4", "fig6", "bench")
FIG1_COLUMNS = ["pe_name", "algorithm", "security_level", "operation", "platform", "functionality",
                "freq_mhz", "klut", "kff", "bram", "dsp", "total", "total_display"]
FIG4_COLUMNS = ["pe_name", "platform", "functionality", "pe_mean_us", "baseline_mean_us", "ratio"]
FIG6_COLUMNS = ["pe_name", "platform", "functionality", "start_us", "release_us", "overhead_us",
                "baseline_mean_us", "overhead_ratio", "overhead_dominated"]
FIG4_DEFAULT_PLATFORM = Platform.AU280.value
_FIG1_BARS = ["freq_mhz", "klut", "kff", "bram", "dsp", "total", "total_display"]


def load_resources(path: Optional[str] = None) -> List[ResourceRecord]:
    """Table-1 rows as ResourceRecords, in file order."""
    df = load_table(path or RESOURCES_PATH, TABLE1_COLUMNS)
    records = []
    for index, row in df.iterrows():
        try:
            rec = ResourceRecord(
                pe_name=str(row["PE Name"]),
                platform=str(row["Platform"]),
                security_level=int(row["Security Level"]),
                operation=str(row["Operation"]),
                freq_mhz=int(row["Frequency [MHz]"]),
                klut=float(row["kLUTs"]),
                kff=float(row["kFFs"]),
                bram=float(row["BRAM"]),
                dsp=float(row["DSPs"]),
                functionality=str(row["Functionality"]),
                algorithm=str(row["Algorithm"]),
            )
        except (TypeError, ValueError) as e:
            raise DataError(f"Resource row {index} is malformed: {str(e)}")
        if min(rec.freq_mhz, rec.klut, rec.kff, rec.bram, rec.dsp) < 0:
            raise DataError(f"Resource row {index} ({rec.pe_name}/{rec.platform}) has a negative value")
        records.append(rec)

    seen = set()
    for rec in records:
        if (rec.pe_name, rec.platform) in seen:
            raise DataError(f"Duplicate resource entry for {rec.pe_name} on {rec.platform}")
        seen.add((rec.pe_name, rec.platform))
    logger.info(f"Loaded {len(records)} resource records")
    return records


def resource_total(rec: ResourceRecord) -> float:
    """kLUTs + kFFs + BRAM + DSPs, LUTs and FFs counted in thousands."""
    return rec.klut + rec.kff + rec.bram + rec.dsp


def display_total(total: float) -> int:
    """Half-up integer label for a resource total."""
    return int(Decimal(repr(total)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def area_time(rec: ResourceRecord, mean_us: float) -> float:
    """Resource total times mean duration; a stand-in for an area-latency product, not a canonical metric."""
    if mean_us <= 0:
        raise InvalidArgumentError(f"Mean duration must be positive, got {mean_us}")
    return resource_total(rec) * mean_us


def _family_of(rec: ResourceRecord) -> str:
    if rec.algorithm:
        return rec.algorithm.lower()
    for family in Family:
        if rec.pe_name.startswith(family.value):
            return family.value
    raise DataError(f"Cannot tell the algorithm of PE {rec.pe_name}")


def frequency_ratio(rows_a: Iterable[ResourceRecord], rows_b: Iterable[ResourceRecord],
                    operations: Optional[Iterable[Operation]] = None) -> Dict[str, float]:
    """Per-family geometric mean of freq_a / freq_b over PEs present on both platforms.

    `operations` restricts the PEs taken into account, e.g. to verify PEs only.
    """
    wanted = {Operation.parse(op) for op in operations} if operations else None

    def index(rows):
        table = {}
        for rec in rows:
            if wanted is None or Operation.parse(rec.operation) in wanted:
                table[rec.pe_name] = rec
        return table

    a, b = index(rows_a), index(rows_b)
    if set(a) != set(b):
        diff = sorted(set(a) ^ set(b))
        raise DataError(f"PE sets differ between platforms: {', '.join(diff)}")

    logs: Dict[str, List[float]] = {}
    for name in sorted(a):
        if a[name].freq_mhz <= 0 or b[name].freq_mhz <= 0:
            raise DataError(f"PE {name} has a non-positive design frequency")
        logs.setdefault(_family_of(a[name]), []).append(np.log(a[name].freq_mhz / b[name].freq_mhz))
    return {family: float(np.exp(np.mean(values))) for family, values in sorted(logs.items())}


def platform_rows(records: Iterable[ResourceRecord], platform: str) -> List[ResourceRecord]:
    return [r for r in records if r.platform == platform]


def load_baselines(path: str) -> Dict[str, float]:
    """PE id -> software baseline mean in microseconds, from a bench/baseline CSV."""
    if not os.path.isfile(path):
        raise InvalidArgumentError(f"Baseline file not found: {path}")
    try:
        df = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"Cannot read {path}: {str(e)}")
    if "id" not in df.columns or "mean_total_us" not in df.columns:
        raise DataError(f"{path} lacks the id/mean_total_us columns")
    baselines = {str(row["id"]): float(row["mean_total_us"]) for _, row in df.iterrows()}
    logger.info(f"Loaded {len(baselines)} baselines from {path}")
    return baselines


def table1_frame(resources: List[ResourceRecord]) -> pd.DataFrame:
    rows = [[r.algorithm, r.platform, r.security_level, r.operation, r.pe_name, r.functionality,
             r.freq_mhz, r.klut, r.kff, r.bram, r.dsp] for r in resources]
    return pd.DataFrame(rows, columns=TABLE1_COLUMNS)


def table2_frame(calibration: Calibration) -> pd.DataFrame:
    rows = [[pe.family.value.capitalize(), pe.platform.value, pe.level, pe.operation.label, pe.pe_name,
             pe.functionality.value, pe.freq_mhz, m.start_ns, m.wait_ns, m.release_ns, round(modeled_mean_us(m), 6)]
            for pe, m in calibration.items()]
    return pd.DataFrame(rows, columns=TABLE2_COLUMNS)


def fig1_frame(resources: List[ResourceRecord]) -> pd.DataFrame:
    rows = []
    for r in resources:
        total = resource_total(r)
        rows.append([r.pe_name, r.algorithm, r.security_level, r.operation, r.platform, r.functionality,
                     r.freq_mhz, r.klut, r.kff, r.bram, r.dsp, round(total, 6), display_total(total)])
    return pd.DataFrame(rows, columns=FIG1_COLUMNS)


def _fig1_groups(df: pd.DataFrame) -> List[Dict]:
    """One entry per PE, bars keyed by platform."""
    groups: Dict[str, Dict] = {}
    for row in _records(df):
        group = groups.setdefault(row["pe_name"], {
            "pe_name": row["pe_name"], "algorithm": row["algorithm"],
            "security_level": row["security_level"], "operation": row["operation"], "bars": {},
        })
        group["bars"][row["platform"]] = {k: row[k] for k in ["functionality"] + _FIG1_BARS}
    return list(groups.values())


def _platform_models(calibration: Calibration, platform: str):
    return [(pe, m) for pe, m in calibration.items() if pe.platform.value == platform]


def _baseline_for(baselines: Dict[str, float], pe_name: str) -> Optional[float]:
    value = baselines.get(pe_name)
    if value is not None and value <= 0:
        raise InvalidArgumentError(f"Baseline mean for {pe_name} must be positive")
    return value


def fig4_frame(calibration: Calibration, baselines: Dict[str, float], platform: str = FIG4_DEFAULT_PLATFORM) -> pd.DataFrame:
    """PE mean duration against the software baseline; ratio = pe / baseline."""
    rows = []
    for pe, m in _platform_models(calibration, platform):
        pe_mean = modeled_mean_us(m)
        baseline = _baseline_for(baselines, pe.pe_name)
        ratio = pe_mean / baseline if baseline else None
        rows.append([pe.pe_name, platform, pe.functionality.value, pe_mean, baseline, ratio])
    return pd.DataFrame(rows, columns=FIG4_COLUMNS)


def fig6_frame(calibration: Calibration, baselines: Dict[str, float], platform: str = FIG4_DEFAULT_PLATFORM) -> pd.DataFrame:
    """Start and release phases stacked against the software baseline."""
    rows = []
    for pe, m in _platform_models(calibration, platform):
        overhead_us = (m.start_ns + m.release_ns) / 1000.0
        baseline = _baseline_for(baselines, pe.pe_name)
        ratio = overhead_us / baseline if baseline else None
        rows.append([pe.pe_name, platform, pe.functionality.value, m.start_ns / 1000.0, m.release_ns / 1000.0,
                     overhead_us, baseline, ratio, None if ratio is None else ratio >= 1])
    return pd.DataFrame(rows, columns=FIG6_COLUMNS)


def _records(df: pd.DataFrame) -> List[Dict]:
    # to_json maps NaN to null and numpy scalars to JSON numbers
    return json.loads(df.to_json(orient="records"))


def _write(out_dir: str, kind: str, df: pd.DataFrame, payload) -> Tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{kind}.csv")
    json_path = os.path.join(out_dir, f"{kind}.json")
    df.to_csv(csv_path, index=False, lineterminator="\n")
    with open(json_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2, ensure_ascii=False)
        f.write("\n")
    logger.info(f"Wrote {kind} ({len(df)} rows) to {csv_path}")
    return csv_path, json_path


def build_frame(kind: str, resources: Optional[List[ResourceRecord]] = None,
                calibration: Optional[Calibration] = None, baselines: Optional[Dict[str, float]] = None,
                records: Optional[List[BenchRecord]] = None, platform: Optional[str] = None) -> pd.DataFrame:
    """Tabular data behind one report kind."""
    if kind == "table1":
        return table1_frame(resources or [])
    if kind == "table2":
        return table2_frame(calibration or {})
    if kind == "fig1":
        return fig1_frame(resources or [])
    if kind == "fig4":
        return fig4_frame(calibration or {}, baselines or {}, platform or FIG4_DEFAULT_PLATFORM)
    if kind == "fig6":
        return fig6_frame(calibration or {}, baselines or {}, platform or FIG4_DEFAULT_PLATFORM)
    if kind == "bench":
        return records_frame(records or [])
    raise InvalidArgumentError(f"Unknown report kind: {kind}. Available: {', '.join(REPORT_KINDS)}")


def emit(kind: str, out_dir: str, resources: Optional[List[ResourceRecord]] = None,
         calibration: Optional[Calibration] = None, baselines: Optional[Dict[str, float]] = None,
         records: Optional[List[BenchRecord]] = None, platform: Optional[str] = None,
         log_scale: bool = True) -> Tuple[str, str]:
    """Write <kind>.csv and <kind>.json under out_dir; empty inputs give header-only files."""
    df = build_frame(kind, resources, calibration, baselines, records, platform)

    if kind == "fig1":
        payload = {"kind": kind, "pes": _fig1_groups(df)}
    elif kind in ("fig4", "fig6"):
        payload = {"kind": kind, "platform": platform or FIG4_DEFAULT_PLATFORM,
                   "log_scale": bool(log_scale), "rows": _records(df)}
    else:
        payload = _records(df)
    return _write(out_dir, kind, df, payload)
