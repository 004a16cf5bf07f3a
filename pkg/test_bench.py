import json

import pandas as pd
import pytest

from config import SHIPPED_CALIBRATION_PATH
from errors import InvalidArgumentError
from models import BenchRecord, JobTiming, Operation
from services import bench_service, nist_api
from services.bench_service import BENCH_COLUMNS, Workload
from services.device_service import ModeledBackend, SoftwareBackend, load_calibration


@pytest.fixture(scope="module")
def calibration():
    return load_calibration(SHIPPED_CALIBRATION_PATH)


def make_record(mean_total_us, start_ns=0.0, release_ns=0.0, record_id="kyber2_enc"):
    return BenchRecord(id=record_id, runs=10, mean_total_us=mean_total_us, mean_start_ns=start_ns,
                       mean_wait_ns=mean_total_us * 1000 - start_ns - release_ns, mean_release_ns=release_ns,
                       stddev_total_us=0.0)


@pytest.mark.parametrize("family,level,operation", [
    ("kyber", 1, Operation.ENCAPSULATE),
    ("kyber", 1, Operation.DECAPSULATE),
    ("dilithium", 2, Operation.SIGN),
    ("dilithium", 2, Operation.VERIFY),
])
def test_workload_draws_fresh_inputs(family, level, operation):
    workload = Workload(nist_api.registry_lookup(family, level), operation)
    first, second = workload.next_args(), workload.next_args()
    assert first != second
    assert len(first) == 2


def test_workload_fixed_inputs():
    workload = Workload(nist_api.registry_lookup("dilithium", 3), "sign", fixed_inputs=True)
    assert workload.next_args() == workload.next_args()
    assert len(workload.next_args()[1]) == bench_service.SIGN_MESSAGE_LEN


def test_workload_rejects_foreign_operation():
    with pytest.raises(InvalidArgumentError):
        Workload(nist_api.registry_lookup("kyber", 1), Operation.SIGN)
    with pytest.raises(InvalidArgumentError):
        Workload(nist_api.registry_lookup("kyber", 1), Operation.KEYPAIR)


def test_summarize_uses_population_stddev():
    timings = [JobTiming(100.0, 800.0, 100.0, 1000.0), JobTiming(300.0, 2400.0, 300.0, 3000.0)]
    record = bench_service.summarize("x", timings, "software", "VC709")
    assert record.mean_total_us == pytest.approx(2.0)
    assert record.stddev_total_us == pytest.approx(1.0)
    assert record.mean_start_ns == pytest.approx(200.0)
    assert record.mean_attempts is None
    assert record.runs == 2 and record.valid


def test_modeled_bench_reproduces_table_mean(calibration):
    backend = ModeledBackend(calibration, "VC709")
    entry = nist_api.registry_lookup("kyber", 1)
    pe = backend.descriptor(entry, "enc")
    record = bench_service.run_bench(backend, pe, Workload(entry, pe.operation), n=5)
    assert record.runs == 5 and record.valid
    assert record.mean_total_us == pytest.approx(683.862819)
    assert record.stddev_total_us == pytest.approx(0.0, abs=1e-9)
    assert record.mean_start_ns == pytest.approx(33879.021)
    assert (record.backend, record.platform) == ("modeled", "VC709")
    assert "cpu_count" in record.host


def test_software_bench_records_attempts():
    backend = SoftwareBackend("AU280")
    entry = nist_api.registry_lookup("dilithium", 2)
    pe = backend.descriptor(entry, "sign")
    record = bench_service.run_bench(backend, pe, Workload(entry, pe.operation), n=3, warmup=False)
    assert record.runs == 3
    assert record.mean_total_us > 0
    assert record.mean_attempts >= 1


def test_bench_fault_gives_partial_record(calibration):
    backend = ModeledBackend(calibration, "AU280", simulate_deadlock_ms=10)
    entry = nist_api.registry_lookup("dilithium", 2)
    pe = backend.descriptor(entry, "sign")
    record = bench_service.run_bench(backend, pe, Workload(entry, pe.operation), n=3)
    assert record.valid is False
    assert record.runs == 0


@pytest.mark.parametrize("family,level,operation", [
    ("kyber", 1, "enc"),
    ("kyber", 3, "dec"),
    ("dilithium", 3, "sign"),
    ("dilithium", 5, "verify"),
])
def test_fixed_inputs_give_identical_outputs(family, level, operation):
    backend = SoftwareBackend("VC709")
    entry = nist_api.registry_lookup(family, level)
    pe = backend.descriptor(entry, operation)
    record = bench_service.run_bench(backend, pe, Workload(entry, operation, fixed_inputs=True), n=3)
    assert record.valid
    assert len(record.output_digests) == 3
    assert len(set(record.output_digests)) == 1

    baseline = bench_service.run_software_baseline(entry, operation, n=2,
                                                   workload=Workload(entry, operation, fixed_inputs=True),
                                                   warmup=False)
    assert baseline.output_digests == record.output_digests[:2]


def test_fresh_inputs_keep_no_digests():
    backend = SoftwareBackend("VC709")
    entry = nist_api.registry_lookup("kyber", 1)
    pe = backend.descriptor(entry, "enc")
    record = bench_service.run_bench(backend, pe, Workload(entry, "enc"), n=2, warmup=False)
    assert record.output_digests == []


class DriftingBackend(ModeledBackend):
    """Returns a different output on every job."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.jobs = 0

    def _execute(self, pe, entry, args):
        outputs, timing = super()._execute(pe, entry, args)
        self.jobs += 1
        return outputs + bytes([self.jobs]), timing


def test_diverging_outputs_invalidate_record(calibration):
    backend = DriftingBackend(calibration, "VC709")
    entry = nist_api.registry_lookup("kyber", 1)
    pe = backend.descriptor(entry, "dec")
    record = bench_service.run_bench(backend, pe, Workload(entry, "dec", fixed_inputs=True), n=3)
    assert record.runs == 3
    assert len(set(record.output_digests)) == 3
    assert record.valid is False


def test_output_digest():
    assert bench_service.output_digest(b"ab") == bench_service.output_digest(b"ab")
    assert bench_service.output_digest((b"a", b"b")) != bench_service.output_digest((b"ab", b""))
    assert bench_service.output_digest(None) != bench_service.output_digest(b"")


def test_bench_argument_checks(calibration):
    backend = ModeledBackend(calibration, "VC709")
    entry = nist_api.registry_lookup("kyber", 1)
    pe = backend.descriptor(entry, "dec")
    with pytest.raises(InvalidArgumentError):
        bench_service.run_bench(backend, pe, Workload(entry, "enc"), n=2)
    with pytest.raises(InvalidArgumentError):
        bench_service.run_bench(backend, pe, Workload(entry, "dec"), n=0)


def test_software_baseline():
    entry = nist_api.registry_lookup("kyber", 3)
    record = bench_service.run_software_baseline(entry, "dec", n=3)
    assert record.id == "kyber3_dec"
    assert record.backend == bench_service.BASELINE_BACKEND
    assert record.platform is None
    assert record.mean_start_ns == 0 and record.mean_release_ns == 0
    assert record.mean_wait_ns / 1000 == pytest.approx(record.mean_total_us)


def test_compare_ratios():
    record = make_record(683.862819, start_ns=33879.021, release_ns=24261.589)
    comparison = bench_service.compare(record, make_record(100.0))
    assert comparison.total_ratio == pytest.approx(6.83862819)
    assert comparison.overhead_ratio == pytest.approx(0.5814061)
    assert not comparison.overhead_dominated
    assert bench_service.compare(record, make_record(50.0)).overhead_dominated


def test_compare_is_linear_in_baseline():
    record = make_record(400.0, start_ns=20000.0, release_ns=20000.0)
    a = bench_service.compare(record, make_record(200.0))
    b = bench_service.compare(record, make_record(400.0))
    assert a.total_ratio == pytest.approx(2 * b.total_ratio)
    assert a.overhead_ratio == pytest.approx(2 * b.overhead_ratio)


def test_compare_rejects_zero_baseline():
    with pytest.raises(InvalidArgumentError):
        bench_service.compare(make_record(10.0), make_record(0.0))


def test_write_records(tmp_path):
    records = [make_record(1.5), make_record(2.5, record_id="kyber2_dec")]
    records[0].host = {"cpu_count": 8}
    csv_path, json_path = bench_service.write_records(records, str(tmp_path), stem="unit")
    df = pd.read_csv(csv_path)
    assert list(df.columns) == BENCH_COLUMNS + ["host_cpu_count"]
    assert list(df["id"]) == ["kyber2_enc", "kyber2_dec"]
    with open(json_path, encoding="utf-8") as f:
        data = json.load(f)
    assert [row["mean_total_us"] for row in data] == [1.5, 2.5]


def test_write_records_empty(tmp_path):
    csv_path, _ = bench_service.write_records([], str(tmp_path))
    with open(csv_path, encoding="utf-8") as f:
        assert f.read().strip() == ",".join(BENCH_COLUMNS)
