import argparse
import json
import logging
import sys
from typing import Dict, List, Optional

import pandas as pd

from config import (
    BENCH_RUNS, CALIBRATION_PATH, DEBUG, DEFAULT_KAT_ENTROPY, DEFAULT_PLATFORM, ERROR_INVALID_LENGTH, KAT_CASES,
    KAT_WORKERS, LOG_FILE, LOG_FORMAT, LOG_LEVEL, OUTPUT_DIR, RESOURCES_PATH, CliConfig,
)
from errors import ConfigurationError, DataError, InvalidArgumentError, KatParseError, NotFoundError
from models import Operation, Platform
from services import bench_service, kat_service, nist_api, report_service
from services.device_service import load_calibration, make_backend
from services.nist_api import DEFAULT_REGISTRY

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_DATA = 3
CLI_REPORT_KINDS = [k for k in report_service.REPORT_KINDS if k != "bench"]

logger = logging.getLogger(__name__)


def setup_logging(level: str = LOG_LEVEL, log_file: Optional[str] = LOG_FILE) -> None:
    """stderr always, plus a log file when configured; stdout stays machine-readable."""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        format=LOG_FORMAT,
        level=logging.DEBUG if DEBUG else getattr(logging, level, logging.INFO),
        handlers=handlers,
        force=True,
    )


def _combos_epilog() -> str:
    combos = ", ".join(f"{family}/{level}" for family, level in DEFAULT_REGISTRY.combos())
    return f"Registered (family/level) combinations: {combos}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pqc-pe-bench",
        description="KAT verification and benchmarking of Kyber/Dilithium processing elements",
        epilog=_combos_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--pretty", action="store_true", help="human-readable tables instead of JSON")
    sub = parser.add_subparsers(dest="command", required=True)

    def scheme_args(p, operation: bool = False, required: bool = True):
        p.add_argument("--family", required=required, choices=sorted({f for f, _ in DEFAULT_REGISTRY.combos()}))
        p.add_argument("--level", required=required, type=int)
        if operation:
            p.add_argument("--operation", required=required, help="encapsulate/decapsulate/sign/verify (enc/dec accepted)")

    def device_args(p):
        p.add_argument("--backend", default="software", choices=["software", "modeled"])
        p.add_argument("--platform", default=DEFAULT_PLATFORM, choices=[p.value for p in Platform])
        p.add_argument("--calibration", default=CALIBRATION_PATH, help="Table-2 style CSV for the modeled backend")
        p.add_argument("--simulate-deadlock", type=float, metavar="TIMEOUT_MS",
                       help="make jobs on Deadlock-flagged PEs time out after TIMEOUT_MS")

    p = sub.add_parser("kat-gen", help="generate a NIST .rsp file", epilog=_combos_epilog(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    scheme_args(p)
    p.add_argument("--cases", type=int, default=KAT_CASES)
    p.add_argument("--entropy", help="48-byte master entropy as hex (default 00..2F)")
    p.add_argument("--output-dir", default=OUTPUT_DIR)

    p = sub.add_parser("kat-verify", help="run a .rsp file through the apply and verify PEs", epilog=_combos_epilog(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("path")
    scheme_args(p)
    device_args(p)
    p.add_argument("--workers", type=int, default=KAT_WORKERS)
    p.add_argument("--json-report", help="also write the per-case report to this file")

    p = sub.add_parser("bench", help="time repeated jobs on one PE", epilog=_combos_epilog(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    scheme_args(p, operation=True)
    device_args(p)
    p.add_argument("--runs", type=int, default=BENCH_RUNS)
    p.add_argument("--no-warmup", action="store_true")
    p.add_argument("--fixed-inputs", action="store_true", help="repeat the first inputs and require identical outputs")
    p.add_argument("--output-dir", default=OUTPUT_DIR)

    p = sub.add_parser("baseline", help="time direct software calls (all PEs when no scheme is given)",
                       epilog=_combos_epilog(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    scheme_args(p, operation=True, required=False)
    p.add_argument("--runs", type=int, default=BENCH_RUNS)
    p.add_argument("--no-warmup", action="store_true")
    p.add_argument("--output-dir", default=OUTPUT_DIR)

    p = sub.add_parser("report", help="emit table and figure data series")
    p.add_argument("--kind", action="append", choices=CLI_REPORT_KINDS, help="repeatable; default all")
    p.add_argument("--resources", default=RESOURCES_PATH, help="Table-1 style CSV")
    p.add_argument("--calibration", default=CALIBRATION_PATH, help="Table-2 style CSV")
    p.add_argument("--baselines", help="baseline CSV written by the baseline command")
    p.add_argument("--platform", default=report_service.FIG4_DEFAULT_PLATFORM, choices=[p.value for p in Platform])
    p.add_argument("--linear", action="store_true", help="mark fig4/fig6 series for a linear axis")
    p.add_argument("--output-dir", default=OUTPUT_DIR)

    p = sub.add_parser("kernel-descriptor", help="print the kernel.json of one PE", epilog=_combos_epilog(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    scheme_args(p, operation=True)
    return parser


def config_from_args(args: argparse.Namespace) -> CliConfig:
    entropy = DEFAULT_KAT_ENTROPY
    if getattr(args, "entropy", None):
        try:
            entropy = bytes.fromhex(args.entropy)
        except ValueError:
            raise InvalidArgumentError("--entropy must be hex")
        if len(entropy) != 48:
            raise InvalidArgumentError(ERROR_INVALID_LENGTH.format(name="entropy", expected=48, actual=len(entropy)))

    return CliConfig(
        command=args.command,
        family=getattr(args, "family", None),
        level=getattr(args, "level", None),
        operation=getattr(args, "operation", None),
        backend=getattr(args, "backend", "software"),
        platform=getattr(args, "platform", DEFAULT_PLATFORM),
        runs=getattr(args, "runs", BENCH_RUNS),
        cases=getattr(args, "cases", KAT_CASES),
        entropy=entropy,
        input_path=getattr(args, "path", None),
        output_dir=getattr(args, "output_dir", OUTPUT_DIR),
        calibration_path=getattr(args, "calibration", CALIBRATION_PATH),
        resources_path=getattr(args, "resources", RESOURCES_PATH),
        no_warmup=getattr(args, "no_warmup", False),
        fixed_inputs=getattr(args, "fixed_inputs", False),
        simulate_deadlock_ms=getattr(args, "simulate_deadlock", None),
        pretty=args.pretty,
        json_report=getattr(args, "json_report", None),
        kinds=getattr(args, "kind", None) or list(CLI_REPORT_KINDS),
    )


def _print(data, pretty: bool, table: Optional[pd.DataFrame] = None) -> None:
    if pretty and table is not None:
        print(table.to_string(index=False))
    else:
        print(json.dumps(data, indent=2 if pretty else None))


def cmd_kat_gen(cfg: CliConfig) -> int:
    entry = nist_api.registry_lookup(cfg.family, cfg.level)
    kat = kat_service.generate_kat(entry, cfg.cases, cfg.entropy)
    path = kat_service.save_rsp(kat, entry, cfg.output_dir)
    _print({"algorithm": entry.algname, "cases": len(kat.cases), "path": path}, cfg.pretty)
    return EXIT_OK


def cmd_kat_verify(cfg: CliConfig, workers: int = KAT_WORKERS) -> int:
    entry = nist_api.registry_lookup(cfg.family, cfg.level)
    kat = kat_service.read_rsp(cfg.input_path)
    backend = make_backend(cfg.backend, cfg.platform, cfg.calibration_path, cfg.simulate_deadlock_ms)
    report = kat_service.run_kat(backend, entry, kat, workers)

    data = report.to_dict()
    if cfg.json_report:
        with open(cfg.json_report, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2)
        logger.info(f"Wrote KAT report to {cfg.json_report}")

    if cfg.pretty:
        failing = pd.DataFrame([r.to_dict() for r in report.results if not r.passed],
                               columns=["count", "passed", "field", "error"])
        print(f"{report.algorithm} on {report.backend}: {report.passed}/{len(report.results)} cases passed")
        if not failing.empty:
            print(failing.to_string(index=False))
    else:
        _print(data, False)
    return EXIT_OK if report.all_passed else EXIT_VERIFY_FAILED


def cmd_bench(cfg: CliConfig) -> int:
    entry = nist_api.registry_lookup(cfg.family, cfg.level)
    backend = make_backend(cfg.backend, cfg.platform, cfg.calibration_path, cfg.simulate_deadlock_ms)
    pe = backend.descriptor(entry, cfg.operation)
    workload = bench_service.Workload(entry, pe.operation, fixed_inputs=cfg.fixed_inputs)
    record = bench_service.run_bench(backend, pe, workload, cfg.runs, warmup=not cfg.no_warmup)
    csv_path, json_path = bench_service.write_records(
        [record], cfg.output_dir, stem=f"bench_{backend.name}_{pe.platform.value}_{pe.pe_name}")
    _print({"csv": csv_path, "json": json_path, "records": [record.to_row()]}, cfg.pretty,
           bench_service.records_frame([record]))
    return EXIT_OK if record.valid else EXIT_VERIFY_FAILED


def cmd_baseline(cfg: CliConfig) -> int:
    if cfg.family is not None or cfg.level is not None:
        if cfg.family is None or cfg.level is None:
            raise InvalidArgumentError("--family and --level must be given together")
        entries = [nist_api.registry_lookup(cfg.family, cfg.level)]
    else:
        entries = list(DEFAULT_REGISTRY)

    records = []
    for entry in entries:
        operations = [Operation.parse(cfg.operation)] if cfg.operation else [entry.apply_operation, entry.verify_operation]
        for op in operations:
            records.append(bench_service.run_software_baseline(entry, op, cfg.runs, warmup=not cfg.no_warmup))
    csv_path, json_path = bench_service.write_records(records, cfg.output_dir, stem="baseline")
    _print({"csv": csv_path, "json": json_path, "records": [r.to_row() for r in records]}, cfg.pretty,
           bench_service.records_frame(records))
    return EXIT_OK


def cmd_report(cfg: CliConfig, baselines_path: Optional[str] = None, log_scale: bool = True) -> int:
    resources = None
    calibration = None
    if {"table1", "fig1"} & set(cfg.kinds):
        resources = report_service.load_resources(cfg.resources_path)
    if {"table2", "fig4", "fig6"} & set(cfg.kinds):
        calibration = load_calibration(cfg.calibration_path)
    baselines: Dict[str, float] = report_service.load_baselines(baselines_path) if baselines_path else {}

    outputs = {}
    for kind in cfg.kinds:
        csv_path, json_path = report_service.emit(kind, cfg.output_dir, resources=resources, calibration=calibration,
                                                  baselines=baselines, platform=cfg.platform, log_scale=log_scale)
        outputs[kind] = {"csv": csv_path, "json": json_path}

    if resources and cfg.pretty:
        ratios = report_service.frequency_ratio(report_service.platform_rows(resources, Platform.AU280.value),
                                                report_service.platform_rows(resources, Platform.VC709.value))
        print(pd.Series(ratios, name="AU280/VC709 frequency").to_string())
    _print(outputs, cfg.pretty)
    return EXIT_OK


def cmd_kernel_descriptor(cfg: CliConfig) -> int:
    entry = nist_api.registry_lookup(cfg.family, cfg.level)
    print(json.dumps(nist_api.kernel_descriptor(entry, cfg.operation), indent=2))
    return EXIT_OK


def run(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    if cfg.command == "kat-gen":
        return cmd_kat_gen(cfg)
    if cfg.command == "kat-verify":
        return cmd_kat_verify(cfg, args.workers)
    if cfg.command == "bench":
        return cmd_bench(cfg)
    if cfg.command == "baseline":
        return cmd_baseline(cfg)
    if cfg.command == "report":
        return cmd_report(cfg, args.baselines, log_scale=not args.linear)
    if cfg.command == "kernel-descriptor":
        return cmd_kernel_descriptor(cfg)
    raise InvalidArgumentError(f"Unknown command: {cfg.command}")


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and map failures to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging()
    try:
        return run(args)
    except (InvalidArgumentError, NotFoundError, ConfigurationError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_USAGE
    except (KatParseError, DataError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}", exc_info=True)
        return EXIT_DATA
    except ValueError as e:
        # bad enum spellings such as an unknown --operation
        logger.error(f"Invalid argument: {e}")
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
