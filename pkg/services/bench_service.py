"""Measurement harness: repeated sequential jobs, phase means and baseline comparison."""
import logging
import os
import time
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import psutil
from Crypto.Hash import SHA256

from config import BENCH_RUNS, DEFAULT_KAT_ENTROPY
from errors import InvalidArgumentError
from models import BenchRecord, Comparison, JobTiming, Operation, PeDescriptor
from services import nist_api
from services.device_service import DeviceBackend, invoke_operation
from services.drbg import NistRandom
from services.nist_api import SchemeEntry
from utils.cache import clear_expansion_caches

# Configure logging
logger = logging.getLogger(__name__)

BENCH_COLUMNS = ["id", "backend", "platform", "runs", "valid", "mean_total_us", "mean_start_ns",
                 "mean_wait_ns", "mean_release_ns", "stddev_total_us", "mean_attempts"]
BASELINE_BACKEND = "baseline"
SIGN_MESSAGE_LEN = 33


def output_digest(outputs) -> str:
    """SHA-256 over a job output: bytes, a tuple of byte strings or None (rejected signature)."""
    parts = outputs if isinstance(outputs, tuple) else (outputs,)
    h = SHA256.new()
    for part in parts:
        if part is None:
            h.update(b"\xff")
        else:
            h.update(len(part).to_bytes(4, "big") + bytes(part))
    return h.hexdigest()


def _check_digests(record_id: str, digests: List[str]) -> bool:
    """Fixed inputs must give byte-identical outputs on every run."""
    if len(set(digests)) > 1:
        logger.error(f"{record_id}: {len(set(digests))} distinct outputs over {len(digests)} runs with fixed inputs")
        return False
    return True


class Workload:
    """Job inputs for one operation of a scheme, built around a single keypair.

    Every call to next_args() draws fresh inputs from a DRBG (new coins, a new
    ciphertext, a new 33-byte message or a new signed message) unless
    `fixed_inputs` is set, in which case the first inputs are repeated.
    """

    def __init__(self, entry: SchemeEntry, operation: Union[str, Operation],
                 entropy: bytes = DEFAULT_KAT_ENTROPY, fixed_inputs: bool = False):
        self.entry = entry
        self.operation = Operation.parse(operation)
        if self.operation not in (entry.apply_operation, entry.verify_operation):
            raise InvalidArgumentError(f"{entry.algname} has no {self.operation.value} operation to benchmark")
        self.fixed_inputs = fixed_inputs
        self._rng = NistRandom(entropy)
        self.pk, self.sk = nist_api.keypair(entry, self._rng)
        self._fixed: Optional[Tuple] = None

    def _fresh_args(self) -> Tuple:
        entry = self.entry
        if self.operation == Operation.ENCAPSULATE:
            return self.pk, self._rng.randombytes(entry.params.coins_len)
        if self.operation == Operation.DECAPSULATE:
            ct, _ = nist_api.kem_apply(entry, self.pk, self._rng.randombytes(entry.params.coins_len))
            return self.sk, ct
        msg = self._rng.randombytes(SIGN_MESSAGE_LEN)
        if self.operation == Operation.SIGN:
            return self.sk, msg
        return self.pk, nist_api.sig_apply(entry, self.sk, msg)

    def next_args(self) -> Tuple:
        if not self.fixed_inputs:
            return self._fresh_args()
        if self._fixed is None:
            self._fixed = self._fresh_args()
        return self._fixed


def host_snapshot() -> Dict[str, Union[str, int, float]]:
    """Host facts attached to bench output."""
    freq = psutil.cpu_freq()
    return {
        "cpu_count": psutil.cpu_count(logical=True),
        "cpu_freq_mhz": round(freq.current, 1) if freq else 0.0,
        "memory_total_mb": psutil.virtual_memory().total // (1024 * 1024),
    }


def summarize(record_id: str, timings: List[JobTiming], backend: str, platform: Optional[str],
              valid: bool = True) -> BenchRecord:
    """Arithmetic means and population standard deviation over the collected jobs."""
    if not timings:
        return BenchRecord(id=record_id, runs=0, mean_total_us=0.0, mean_start_ns=0.0, mean_wait_ns=0.0,
                           mean_release_ns=0.0, stddev_total_us=0.0, backend=backend, platform=platform,
                           valid=False, host=host_snapshot())

    phases = np.array([[t.start_ns, t.wait_ns, t.release_ns, t.total_ns] for t in timings], dtype=np.float64)
    totals_us = phases[:, 3] / 1000.0
    attempts = [t.attempts for t in timings if t.attempts is not None]
    return BenchRecord(
        id=record_id,
        runs=len(timings),
        mean_total_us=float(totals_us.mean()),
        mean_start_ns=float(phases[:, 0].mean()),
        mean_wait_ns=float(phases[:, 1].mean()),
        mean_release_ns=float(phases[:, 2].mean()),
        stddev_total_us=float(totals_us.std()),
        backend=backend,
        platform=platform,
        valid=valid,
        mean_attempts=float(np.mean(attempts)) if attempts else None,
        host=host_snapshot(),
    )


def run_bench(backend: DeviceBackend, pe: PeDescriptor, workload: Workload, n: int = BENCH_RUNS,
              warmup: bool = True) -> BenchRecord:
    """Invoke the PE n times in sequence; one extra uncounted warmup job runs first."""
    if n < 1:
        raise InvalidArgumentError("Benchmark needs at least one run")
    if pe.operation != workload.operation:
        raise InvalidArgumentError(f"Workload is for {workload.operation.value}, PE {pe.pe_name} runs {pe.operation.value}")

    timings: List[JobTiming] = []
    digests: List[str] = []
    valid = True
    try:
        if warmup:
            clear_expansion_caches()
            backend.run_job(pe, workload.next_args())
        for _ in range(n):
            args = workload.next_args()
            clear_expansion_caches()
            outputs, timing = backend.run_job(pe, args)
            timings.append(timing)
            if workload.fixed_inputs:
                digests.append(output_digest(outputs))
    except Exception as e:
        logger.error(f"Benchmark of {pe.pe_name} aborted after {len(timings)} runs: {str(e)}")
        valid = False

    valid = _check_digests(pe.pe_name, digests) and valid
    record = summarize(pe.pe_name, timings, backend.name, pe.platform.value, valid)
    record.output_digests = digests
    logger.info(f"{pe.pe_name} on {backend.name}/{pe.platform.value}: mean {record.mean_total_us:.3f} us over {record.runs} runs")
    return record


def run_software_baseline(entry: SchemeEntry, operation: Union[str, Operation], n: int = BENCH_RUNS,
                          workload: Optional[Workload] = None, warmup: bool = True) -> BenchRecord:
    """Time direct engine calls without any device lifecycle; only the wait phase is non-zero."""
    if n < 1:
        raise InvalidArgumentError("Benchmark needs at least one run")
    workload = workload or Workload(entry, operation)
    operation = workload.operation

    if warmup:
        clear_expansion_caches()
        invoke_operation(entry, operation, workload.next_args())

    timings = []
    digests: List[str] = []
    for _ in range(n):
        args = workload.next_args()
        clear_expansion_caches()
        t0 = time.perf_counter_ns()
        outputs, attempts = invoke_operation(entry, operation, args)
        elapsed = time.perf_counter_ns() - t0
        timings.append(JobTiming(0.0, float(elapsed), 0.0, float(elapsed), attempts))
        if workload.fixed_inputs:
            digests.append(output_digest(outputs))

    record_id = nist_api.pe_name(entry, operation)
    record = summarize(record_id, timings, BASELINE_BACKEND, None, _check_digests(record_id, digests))
    record.output_digests = digests
    logger.info(f"Software baseline {record.id}: mean {record.mean_total_us:.3f} us over {n} runs")
    return record


def compare(record: BenchRecord, baseline: BenchRecord) -> Comparison:
    """Ratios of a PE record to the software baseline of the same operation."""
    if baseline.mean_total_us <= 0:
        raise InvalidArgumentError("Baseline mean must be positive")
    if record.id != baseline.id:
        logger.warning(f"Comparing {record.id} against baseline {baseline.id}")
    overhead_us = (record.mean_start_ns + record.mean_release_ns) / 1000.0
    comparison = Comparison(
        total_ratio=record.mean_total_us / baseline.mean_total_us,
        overhead_ratio=overhead_us / baseline.mean_total_us,
    )
    if comparison.overhead_dominated:
        logger.info(f"{record.id}: communication overhead alone exceeds the software baseline ({comparison.overhead_ratio:.3f})")
    return comparison


def records_frame(records: List[BenchRecord]) -> pd.DataFrame:
    """BENCH_COLUMNS first, then host_* columns in sorted order."""
    rows = [r.to_row() for r in records]
    host_columns = sorted({k for row in rows for k in row if k.startswith("host_")})
    return pd.DataFrame(rows, columns=BENCH_COLUMNS + host_columns)


def write_records(records: List[BenchRecord], out_dir: str, stem: str = "bench") -> Tuple[str, str]:
    """Write records as <stem>.csv and <stem>.json; returns both paths."""
    os.makedirs(out_dir, exist_ok=True)
    df = records_frame(records)
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    json_path = os.path.join(out_dir, f"{stem}.json")
    df.to_csv(csv_path, index=False)
    df.to_json(json_path, orient="records", indent=2)
    logger.info(f"Wrote {len(records)} bench records to {csv_path}")
    return csv_path, json_path
