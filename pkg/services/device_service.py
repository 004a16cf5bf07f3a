"""Accelerator abstraction: PE descriptors, calibration data and the job lifecycle.

A job on a PE goes through start (argument transfer), wait (compute) and
release (result transfer). The software backend measures those phases around a
direct engine call; the modeled backend still computes with the engine but
reports the calibrated phase costs.
"""
import logging
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor, TimeoutError as FutureTimeout
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from cachetools import cached

from config import CALIBRATION_PATH, DEFAULT_PLATFORM, ERROR_UNKNOWN_PE
from errors import DataError, InvalidArgumentError, JobTimeoutError, NotFoundError, PqcBenchError
from models import Family, Functionality, JobTiming, Operation, OverheadModel, PeDescriptor, Platform
from services import nist_api
from services.nist_api import DEFAULT_REGISTRY, SchemeEntry, SchemeRegistry
from utils.datasets import TABLE2_COLUMNS, load_table

# Configure logging
logger = logging.getLogger(__name__)

Calibration = Dict[PeDescriptor, OverheadModel]
_REQUIRED_COLUMNS = TABLE2_COLUMNS[:-1]
_PHASE_COLUMNS = ("PE Start [ns]", "PE Wait [ns]", "PE Release [ns]")


def parse_platform(platform: Union[str, Platform]) -> Platform:
    try:
        return Platform(platform)
    except ValueError:
        raise InvalidArgumentError(f"Unknown platform: {platform}. Available: {', '.join(p.value for p in Platform)}")


def modeled_mean_us(model: OverheadModel) -> float:
    """Mean job duration in microseconds implied by a phase model."""
    return model.total_ns / 1000.0


def pe_descriptor(entry: SchemeEntry, operation: Union[str, Operation], platform: Union[str, Platform],
                  freq_mhz: int = 0, functionality: Functionality = Functionality.WORKING) -> PeDescriptor:
    operation = Operation.parse(operation)
    return PeDescriptor(
        pe_name=nist_api.pe_name(entry, operation),
        family=entry.family,
        level=entry.nist_level,
        operation=operation,
        platform=parse_platform(platform),
        freq_mhz=int(freq_mhz),
        functionality=functionality,
    )


def registry_pes(platform: Union[str, Platform], registry: SchemeRegistry = DEFAULT_REGISTRY,
                 flags: Optional[Dict[str, Functionality]] = None) -> List[PeDescriptor]:
    """One descriptor per apply/verify operation of every registered scheme.

    `flags` maps PE names to their functionality; unlisted PEs are Working.
    """
    flags = flags or {}
    pes = []
    for entry in registry:
        for op in (entry.apply_operation, entry.verify_operation):
            name = nist_api.pe_name(entry, op)
            pes.append(pe_descriptor(entry, op, platform, functionality=flags.get(name, Functionality.WORKING)))
    return pes


def functionality_flags(platform: Union[str, Platform], table=None) -> Dict[str, Functionality]:
    """PE name -> functionality on one platform, read from a calibration table."""
    platform = parse_platform(platform)
    try:
        calibration = load_calibration(CALIBRATION_PATH if table is None else table)
    except PqcBenchError as e:
        logger.warning(f"No functionality flags for {platform.value}, treating every PE as Working: {str(e)}")
        return {}
    return {pe.pe_name: pe.functionality for pe in calibration if pe.platform == platform}


def _calibration_frame(table) -> pd.DataFrame:
    if isinstance(table, pd.DataFrame):
        return table
    if isinstance(table, str):
        return load_table(table, TABLE2_COLUMNS)
    rows = list(table)
    return pd.DataFrame(rows) if rows else pd.DataFrame(columns=_REQUIRED_COLUMNS)


def load_calibration(table=None) -> Calibration:
    """Map each PE of a Table-2 style table (path, DataFrame or row dicts) to its phase model."""
    df = _calibration_frame(CALIBRATION_PATH if table is None else table)
    if df.empty:
        return {}
    missing = [c for c in _REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"Calibration table lacks columns: {', '.join(missing)}")

    calibration: Calibration = {}
    seen = set()
    for index, row in df.iterrows():
        key = (row["PE Name"], row["Platform"])
        if key in seen:
            raise DataError(f"Duplicate calibration entry for {key[0]} on {key[1]}")
        seen.add(key)
        try:
            pe = PeDescriptor(
                pe_name=str(row["PE Name"]),
                family=Family(str(row["Algorithm"]).lower()),
                level=int(row["Security Level"]),
                operation=Operation.parse(row["Operation"]),
                platform=Platform(str(row["Platform"])),
                freq_mhz=int(row["Frequency [MHz]"]),
                functionality=Functionality(str(row["Functionality"])),
            )
            phases = [float(row[c]) for c in _PHASE_COLUMNS]
        except (TypeError, ValueError) as e:
            raise DataError(f"Calibration row {index} is malformed: {str(e)}")
        if not np.all(np.isfinite(phases)):
            raise DataError(f"Calibration row {index} ({pe.pe_name}/{pe.platform.value}) has a non-finite phase")
        if any(p < 0 for p in phases):
            raise DataError(f"Calibration row {index} ({pe.pe_name}/{pe.platform.value}) has a negative phase")
        calibration[pe] = OverheadModel(*phases)

    logger.info(f"Loaded calibration for {len(calibration)} PEs")
    return calibration


@cached(cache={})
def calibrate_timer_overhead(samples: int = 1000) -> int:
    """Smallest observable back-to-back delta of the monotonic nanosecond clock."""
    best = None
    for _ in range(samples):
        a = time.perf_counter_ns()
        b = time.perf_counter_ns()
        if best is None or b - a < best:
            best = b - a
    logger.debug(f"Timer overhead calibrated to {best} ns")
    return best


def invoke_operation(entry: SchemeEntry, operation: Operation, args: Tuple) -> Tuple[object, Optional[int]]:
    if operation == Operation.ENCAPSULATE:
        pk, coins = args
        return nist_api.kem_apply(entry, pk, coins), None
    if operation == Operation.DECAPSULATE:
        sk, ct = args
        return nist_api.kem_verify(entry, sk, ct), None
    if operation == Operation.SIGN:
        sk, msg = args
        return nist_api.sig_apply_with_stats(entry, sk, msg)
    if operation == Operation.VERIFY:
        pk, sm = args
        return nist_api.sig_verify(entry, pk, sm), None
    raise InvalidArgumentError(f"Operation {operation.value} cannot run on a device")


def _copy_out(outputs):
    if isinstance(outputs, tuple):
        return tuple(bytes(o) for o in outputs)
    return None if outputs is None else bytes(outputs)


class DeviceBackend(ABC):
    """A set of PEs on one platform; at most one job in flight per PE."""

    name = "device"

    def __init__(self, pes: Iterable[PeDescriptor], platform: Union[str, Platform] = DEFAULT_PLATFORM,
                 registry: SchemeRegistry = DEFAULT_REGISTRY, simulate_deadlock_ms: Optional[float] = None):
        self.platform = parse_platform(platform)
        self.registry = registry
        self.simulate_deadlock_ms = simulate_deadlock_ms
        self._pes: Dict[str, PeDescriptor] = {pe.pe_name: pe for pe in pes if pe.platform == self.platform}
        self._locks: Dict[str, threading.Lock] = {name: threading.Lock() for name in self._pes}

    def pes(self) -> List[PeDescriptor]:
        return list(self._pes.values())

    def descriptor(self, entry: SchemeEntry, operation: Union[str, Operation]) -> PeDescriptor:
        """Registered PE for an operation of `entry`."""
        operation = Operation.parse(operation)
        if operation == Operation.KEYPAIR:
            raise InvalidArgumentError("Key generation is software-only and has no processing element")
        name = nist_api.pe_name(entry, operation)
        if name not in self._pes:
            raise NotFoundError(ERROR_UNKNOWN_PE.format(pe_name=name, platform=self.platform.value, backend=self.name))
        return self._pes[name]

    def run_job(self, pe: PeDescriptor, args: Tuple) -> Tuple[object, JobTiming]:
        """Acquire the PE, run one job and release it."""
        if pe.operation == Operation.KEYPAIR:
            raise InvalidArgumentError("Key generation is software-only and has no processing element")
        if self._pes.get(pe.pe_name) != pe:
            raise NotFoundError(ERROR_UNKNOWN_PE.format(pe_name=pe.pe_name, platform=pe.platform.value, backend=self.name))
        entry = self.registry.lookup(pe.family, pe.level)

        with self._locks[pe.pe_name]:
            if pe.deadlock:
                if self.simulate_deadlock_ms is not None:
                    self._simulate_hang(pe)
                logger.warning(f"{pe.pe_name} on {pe.platform.value} is flagged Deadlock; running it anyway")
            outputs, timing = self._execute(pe, entry, tuple(args))
        logger.debug(f"{self.name} job {pe.pe_name}: {timing.total_ns:.0f} ns")
        return outputs, timing

    def _simulate_hang(self, pe: PeDescriptor) -> None:
        never_done = threading.Event()
        with ThreadPoolExecutor(max_workers=1) as pool:
            job = pool.submit(never_done.wait)
            try:
                job.result(timeout=self.simulate_deadlock_ms / 1000.0)
            except FutureTimeout:
                never_done.set()
                logger.error(f"{pe.pe_name} on {pe.platform.value} did not complete within {self.simulate_deadlock_ms} ms")
                raise JobTimeoutError(f"{pe.pe_name} timed out after {self.simulate_deadlock_ms} ms")

    @abstractmethod
    def _execute(self, pe: PeDescriptor, entry: SchemeEntry, args: Tuple) -> Tuple[object, JobTiming]:
        """Run the operation and produce its timing."""


class SoftwareBackend(DeviceBackend):
    """Runs the engines on the host and measures the phases with a monotonic clock."""

    name = "software"

    def __init__(self, platform: Union[str, Platform] = DEFAULT_PLATFORM, registry: SchemeRegistry = DEFAULT_REGISTRY,
                 pes: Optional[Iterable[PeDescriptor]] = None, simulate_deadlock_ms: Optional[float] = None):
        if pes is None:
            pes = registry_pes(platform, registry, functionality_flags(platform))
        super().__init__(pes, platform, registry, simulate_deadlock_ms)
        self.timer_overhead_ns = calibrate_timer_overhead()

    def _phase(self, begin: int, end: int) -> int:
        return max(0, end - begin - self.timer_overhead_ns)

    def _execute(self, pe, entry, args):
        t0 = time.perf_counter_ns()
        marshalled = tuple(bytes(a) for a in args)
        t1 = time.perf_counter_ns()
        outputs, attempts = invoke_operation(entry, pe.operation, marshalled)
        t2 = time.perf_counter_ns()
        outputs = _copy_out(outputs)
        t3 = time.perf_counter_ns()

        start, wait, release = self._phase(t0, t1), self._phase(t1, t2), self._phase(t2, t3)
        return outputs, JobTiming(start, wait, release, start + wait + release, attempts)


class ModeledBackend(DeviceBackend):
    """Computes with the engines but reports calibrated phase costs."""

    name = "modeled"

    def __init__(self, calibration: Calibration, platform: Union[str, Platform] = DEFAULT_PLATFORM,
                 registry: SchemeRegistry = DEFAULT_REGISTRY, simulate_deadlock_ms: Optional[float] = None,
                 phase_override: Optional[Dict[str, float]] = None):
        super().__init__(calibration.keys(), platform, registry, simulate_deadlock_ms)
        self._models = {pe.pe_name: model for pe, model in calibration.items() if pe.platform == self.platform}
        bad = set(phase_override or {}) - {"start_ns", "release_ns"}
        if bad:
            raise InvalidArgumentError(f"Only start_ns and release_ns can be overridden, got {sorted(bad)}")
        self.phase_override = dict(phase_override or {})

    def model(self, pe: PeDescriptor) -> OverheadModel:
        base = self._models[pe.pe_name]
        return OverheadModel(
            start_ns=self.phase_override.get("start_ns", base.start_ns),
            wait_ns=base.wait_ns,
            release_ns=self.phase_override.get("release_ns", base.release_ns),
        )

    def _execute(self, pe, entry, args):
        outputs, attempts = invoke_operation(entry, pe.operation, args)
        m = self.model(pe)
        return _copy_out(outputs), JobTiming(m.start_ns, m.wait_ns, m.release_ns, m.total_ns, attempts)


def make_backend(name: str, platform: Union[str, Platform] = DEFAULT_PLATFORM, calibration_path: Optional[str] = None,
                 simulate_deadlock_ms: Optional[float] = None, registry: SchemeRegistry = DEFAULT_REGISTRY) -> DeviceBackend:
    """Backend by CLI name; the modeled one loads its calibration table first."""
    if name == SoftwareBackend.name:
        return SoftwareBackend(platform, registry, simulate_deadlock_ms=simulate_deadlock_ms)
    if name == ModeledBackend.name:
        calibration = load_calibration(calibration_path or CALIBRATION_PATH)
        return ModeledBackend(calibration, platform, registry, simulate_deadlock_ms)
    raise InvalidArgumentError(f"Unknown backend: {name}")
