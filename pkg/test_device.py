import logging

import pytest

from config import SHIPPED_CALIBRATION_PATH
from errors import ConfigurationError, DataError, InvalidArgumentError, JobTimeoutError, NotFoundError
from models import Functionality, Operation, Platform
from services import nist_api
from services.bench_service import Workload
from services.device_service import (
    ModeledBackend, SoftwareBackend, calibrate_timer_overhead, functionality_flags, load_calibration, make_backend,
    modeled_mean_us, registry_pes,
)
from utils import datasets
from utils.datasets import TABLE2_COLUMNS, load_table


@pytest.fixture(scope="module")
def calibration():
    return load_calibration(SHIPPED_CALIBRATION_PATH)


@pytest.fixture
def rows():
    return load_table(SHIPPED_CALIBRATION_PATH, TABLE2_COLUMNS).to_dict("records")


def test_shipped_calibration_has_24_pes(calibration):
    assert len(calibration) == 24
    deadlocked = [pe for pe in calibration if pe.deadlock]
    assert {pe.pe_name for pe in deadlocked} == {"dilithium2_sign"}
    assert {pe.platform for pe in deadlocked} == {Platform.VC709, Platform.AU280}


def test_modeled_mean_matches_table_column(calibration):
    table = load_table(SHIPPED_CALIBRATION_PATH, TABLE2_COLUMNS)
    expected = {(r["PE Name"], r["Platform"]): r["Mean Duration [µs]"] for _, r in table.iterrows()}
    for pe, model in calibration.items():
        assert abs(modeled_mean_us(model) - expected[(pe.pe_name, pe.platform.value)]) <= 1e-3


def test_kyber2_enc_vc709_model(calibration):
    pe = next(p for p in calibration if p.pe_name == "kyber2_enc" and p.platform == Platform.VC709)
    assert pe.freq_mhz == 265
    assert modeled_mean_us(calibration[pe]) == pytest.approx(683.862819, abs=1e-6)


def test_load_calibration_edge_cases(rows, tmp_path):
    assert load_calibration([]) == {}
    assert len(load_calibration(rows[:1])) == 1

    with pytest.raises(DataError):
        load_calibration(rows[:1] + rows[:1])

    negative = dict(rows[0], **{"PE Wait [ns]": -1.0})
    with pytest.raises(DataError):
        load_calibration([negative])

    for bad in (float("nan"), float("inf")):
        with pytest.raises(DataError):
            load_calibration([dict(rows[0], **{"PE Release [ns]": bad})])

    broken = dict(rows[0], Functionality="Broken")
    with pytest.raises(DataError):
        load_calibration([broken])

    missing = {k: v for k, v in rows[0].items() if k != "PE Start [ns]"}
    with pytest.raises(DataError):
        load_calibration([missing])

    with pytest.raises(ConfigurationError):
        load_calibration(str(tmp_path / "nope.csv"))


def test_modified_shipped_dataset_is_rejected(monkeypatch, tmp_path):
    with open(SHIPPED_CALIBRATION_PATH, encoding="utf-8") as f:
        lines = f.read().splitlines()
    (tmp_path / "table2_overheads.csv").write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
    monkeypatch.setattr(datasets, "DATA_DIR", str(tmp_path))
    with pytest.raises(DataError):
        load_calibration(str(tmp_path / "table2_overheads.csv"))


def test_copied_dataset_is_not_pinned(tmp_path):
    with open(SHIPPED_CALIBRATION_PATH, encoding="utf-8") as f:
        lines = f.read().splitlines()
    path = tmp_path / "subset.csv"
    path.write_text("\n".join(lines[:3]) + "\n", encoding="utf-8")
    assert len(load_calibration(str(path))) == 2


def test_modeled_backend_reports_calibration_timing(calibration):
    backend = ModeledBackend(calibration, "VC709")
    entry = nist_api.registry_lookup("kyber", 1)
    pe = backend.descriptor(entry, "enc")
    outputs, timing = backend.run_job(pe, Workload(entry, Operation.ENCAPSULATE).next_args())
    ct, ss = outputs
    assert len(ct) == 768 and len(ss) == 32
    assert timing.start_ns == pytest.approx(33879.021)
    assert timing.wait_ns == pytest.approx(625722.209)
    assert timing.release_ns == pytest.approx(24261.589)
    assert timing.total_ns / 1000 == pytest.approx(683.862819)


def test_phase_override(calibration):
    backend = ModeledBackend(calibration, "AU280", phase_override={"start_ns": 10000.0, "release_ns": 5000.0})
    pe = backend.descriptor(nist_api.registry_lookup("kyber", 3), "dec")
    model = backend.model(pe)
    assert (model.start_ns, model.release_ns) == (10000.0, 5000.0)
    assert model.wait_ns == calibration[pe].wait_ns
    with pytest.raises(InvalidArgumentError):
        ModeledBackend(calibration, "AU280", phase_override={"wait_ns": 1.0})


def test_software_backend_measures_phases():
    backend = SoftwareBackend("VC709")
    entry = nist_api.registry_lookup("dilithium", 3)
    pe = backend.descriptor(entry, Operation.SIGN)
    workload = Workload(entry, Operation.SIGN)
    sm, timing = backend.run_job(pe, workload.next_args())
    assert len(sm) == entry.params.sig_len + 33
    assert min(timing.start_ns, timing.wait_ns, timing.release_ns) >= 0
    assert timing.total_ns == timing.start_ns + timing.wait_ns + timing.release_ns
    assert timing.wait_ns > 0
    assert timing.attempts >= 1
    assert calibrate_timer_overhead() >= 0


def test_unknown_pe_and_keypair(calibration):
    subset = {pe: m for pe, m in calibration.items() if pe.pe_name.startswith("kyber")}
    backend = ModeledBackend(subset, "VC709")
    with pytest.raises(NotFoundError):
        backend.descriptor(nist_api.registry_lookup("dilithium", 3), "sign")
    with pytest.raises(InvalidArgumentError):
        backend.descriptor(nist_api.registry_lookup("kyber", 1), Operation.KEYPAIR)
    foreign = next(pe for pe in calibration if pe.pe_name == "dilithium3_sign" and pe.platform == Platform.VC709)
    with pytest.raises(NotFoundError):
        backend.run_job(foreign, (b"", b""))


def test_deadlock_pe_runs_with_warning(calibration, caplog):
    backend = ModeledBackend(calibration, "VC709")
    entry = nist_api.registry_lookup("dilithium", 2)
    pe = backend.descriptor(entry, "sign")
    assert pe.functionality == Functionality.DEADLOCK
    with caplog.at_level(logging.WARNING):
        sm, _ = backend.run_job(pe, Workload(entry, "sign").next_args())
    assert len(sm) == entry.params.sig_len + 33
    assert "Deadlock" in caplog.text


def test_deadlock_pe_can_time_out(calibration):
    backend = ModeledBackend(calibration, "VC709", simulate_deadlock_ms=20)
    entry = nist_api.registry_lookup("dilithium", 2)
    pe = backend.descriptor(entry, "sign")
    with pytest.raises(JobTimeoutError):
        backend.run_job(pe, Workload(entry, "sign").next_args())
    # Working PEs are unaffected
    verify_pe = backend.descriptor(entry, "verify")
    assert verify_pe.functionality == Functionality.WORKING


def test_software_backend_keeps_deadlock_flags(caplog):
    backend = SoftwareBackend("AU280")
    entry = nist_api.registry_lookup("dilithium", 2)
    pe = backend.descriptor(entry, "sign")
    assert pe.functionality == Functionality.DEADLOCK
    assert backend.descriptor(entry, "verify").functionality == Functionality.WORKING
    with caplog.at_level(logging.WARNING):
        sm, _ = backend.run_job(pe, Workload(entry, "sign").next_args())
    assert len(sm) == entry.params.sig_len + 33
    assert "Deadlock" in caplog.text


def test_software_backend_can_simulate_deadlock():
    backend = SoftwareBackend("VC709", simulate_deadlock_ms=20)
    entry = nist_api.registry_lookup("dilithium", 2)
    with pytest.raises(JobTimeoutError):
        backend.run_job(backend.descriptor(entry, "sign"), Workload(entry, "sign").next_args())


def test_functionality_flags(tmp_path):
    flags = functionality_flags("VC709", SHIPPED_CALIBRATION_PATH)
    assert len(flags) == 12
    assert [name for name, f in flags.items() if f == Functionality.DEADLOCK] == ["dilithium2_sign"]
    assert functionality_flags("VC709", str(tmp_path / "missing.csv")) == {}


def test_registry_pes_cover_every_operation():
    pes = registry_pes("AU280")
    assert len(pes) == 12
    assert {pe.pe_name for pe in pes} >= {"kyber2_enc", "kyber4_dec", "dilithium5_verify"}


def test_make_backend(tmp_path):
    assert make_backend("software").name == "software"
    assert make_backend("modeled", "AU280", SHIPPED_CALIBRATION_PATH).name == "modeled"
    with pytest.raises(InvalidArgumentError):
        make_backend("fpga")
    with pytest.raises(ConfigurationError):
        make_backend("modeled", calibration_path=str(tmp_path / "missing.csv"))
    with pytest.raises(InvalidArgumentError):
        make_backend("software", platform="U250")
