"""NIST .rsp known-answer files: parsing, writing, generation and the apply -> verify check."""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple, Union

from config import DEFAULT_KAT_ENTROPY, KAT_WORKERS
from errors import InvalidArgumentError, KatGenerationError, KatParseError
from models import CaseResult, KatFile, KatKemCase, KatReport, KatSignCase
from services.drbg import NistRandom, kat_seed_schedule, kat_sign_schedule
from services.nist_api import SchemeEntry, kem_encapsulate, kem_verify, keypair, sig_apply, sig_verify

# Configure logging
logger = logging.getLogger(__name__)

KEM_FIELDS = ("count", "seed", "pk", "sk", "ct", "ss")
SIGN_FIELDS = ("count", "seed", "mlen", "msg", "pk", "sk", "smlen", "sm")
_INT_FIELDS = ("count", "mlen", "smlen")

Case = Union[KatKemCase, KatSignCase]


def _hex(data: bytes) -> str:
    # fprintBstr prints "00" for an empty string
    return data.hex().upper() if data else "00"


def write_rsp(file: KatFile) -> str:
    """Serialize in the layout of the NIST KAT generators."""
    lines = [f"# {file.header}", ""]
    for case in file.cases:
        fields = SIGN_FIELDS if isinstance(case, KatSignCase) else KEM_FIELDS
        for name in fields:
            value = getattr(case, name)
            lines.append(f"{name} = {value}" if name in _INT_FIELDS else f"{name} = {_hex(value)}")
        lines.append("")
    return "\n".join(lines) + "\n"


def _build_case(fields: Dict[str, Tuple[str, int]], start_line: int) -> Case:
    kind = SIGN_FIELDS if ("sm" in fields or "smlen" in fields or "mlen" in fields) else KEM_FIELDS
    for name in kind:
        if name not in fields:
            raise KatParseError(f"missing field '{name}'", line=start_line, field=name)

    values = {}
    for name in kind:
        text, line = fields[name]
        if name in _INT_FIELDS:
            try:
                values[name] = int(text)
            except ValueError:
                raise KatParseError(f"field '{name}' is not an integer: {text!r}", line=line, field=name)
        else:
            try:
                values[name] = bytes.fromhex(text)
            except ValueError:
                raise KatParseError(f"field '{name}' is not valid hex", line=line, field=name)

    if kind is KEM_FIELDS:
        return KatKemCase(**values)

    if values["mlen"] == 0 and values["msg"] == b"\x00":
        values["msg"] = b""
    if len(values["msg"]) != values["mlen"]:
        raise KatParseError(f"msg has {len(values['msg'])} bytes, mlen says {values['mlen']}",
                            line=fields["msg"][1], field="msg")
    if len(values["sm"]) != values["smlen"]:
        raise KatParseError(f"sm has {len(values['sm'])} bytes, smlen says {values['smlen']}",
                            line=fields["sm"][1], field="sm")
    return KatSignCase(**values)


def parse_rsp(text: str) -> KatFile:
    """Parse .rsp text; CRLF and extra blank lines are accepted, hex is case-insensitive."""
    header = ""
    cases: List[Case] = []
    fields: Dict[str, Tuple[str, int]] = {}
    start_line = 0

    def flush():
        if not fields:
            return
        case = _build_case(fields, start_line)
        if case.count != len(cases):
            raise KatParseError(f"expected count {len(cases)}, found {case.count}", line=start_line, field="count")
        cases.append(case)
        fields.clear()

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if not header and not cases and not fields:
                header = line.lstrip("#").strip()
            continue
        if "=" not in line:
            raise KatParseError(f"expected 'name = value', got {line!r}", line=number)
        name, _, value = line.partition("=")
        name, value = name.strip(), value.strip()
        if name == "count":
            flush()
            start_line = number
        elif not fields:
            raise KatParseError(f"field '{name}' before any count", line=number, field=name)
        if name in fields:
            raise KatParseError(f"duplicate field '{name}'", line=number, field=name)
        fields[name] = (value, number)
    flush()

    logger.debug(f"Parsed {len(cases)} KAT cases for '{header}'")
    return KatFile(header=header, cases=cases)


def read_rsp(path: str) -> KatFile:
    with open(path, "r", encoding="ascii") as f:
        return parse_rsp(f.read())


def save_rsp(file: KatFile, entry: SchemeEntry, out_dir: str) -> str:
    """Write under the NIST file name of the entry; returns the path."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, entry.kat_filename)
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(write_rsp(file))
    logger.info(f"Wrote {len(file.cases)} KAT cases to {path}")
    return path


def generate_kat(entry: SchemeEntry, n: int, master_entropy: bytes = DEFAULT_KAT_ENTROPY) -> KatFile:
    """Reproduce the NIST generator: per-case DRBG re-seeded from the master schedule."""
    if n < 1:
        raise InvalidArgumentError("KAT generation needs at least one case")
    cases: List[Case] = []

    if entry.is_kem:
        for count, seed in enumerate(kat_seed_schedule(master_entropy, n)):
            rng = NistRandom(seed)
            pk, sk = keypair(entry, rng)
            ct, ss = kem_encapsulate(entry, pk, rng)
            if kem_verify(entry, sk, ct) != ss:
                raise KatGenerationError(f"{entry.algname} case {count}: decapsulation disagrees with encapsulation")
            cases.append(KatKemCase(count=count, seed=seed, pk=pk, sk=sk, ct=ct, ss=ss))
    else:
        for count, (seed, msg) in enumerate(kat_sign_schedule(master_entropy, n)):
            rng = NistRandom(seed)
            pk, sk = keypair(entry, rng)
            sm = sig_apply(entry, sk, msg)
            if sig_verify(entry, pk, sm) != msg:
                raise KatGenerationError(f"{entry.algname} case {count}: signature does not verify")
            cases.append(KatSignCase(count=count, seed=seed, mlen=len(msg), msg=msg,
                                     pk=pk, sk=sk, smlen=len(sm), sm=sm))

    logger.info(f"Generated {n} KAT cases for {entry.algname}")
    return KatFile(header=entry.algname, cases=cases)


def encapsulation_coins(entry: SchemeEntry, seed: bytes) -> bytes:
    """Replay the per-case DRBG up to the encapsulation draw."""
    rng = NistRandom(seed)
    for length in entry.keygen_draws:
        rng.randombytes(length)
    return rng.randombytes(entry.params.coins_len)


def _check_kem_case(backend, entry: SchemeEntry, case: KatKemCase) -> CaseResult:
    result = CaseResult(count=case.count, passed=False)
    apply_pe = backend.descriptor(entry, entry.apply_operation)
    verify_pe = backend.descriptor(entry, entry.verify_operation)

    (ct, ss), result.timings["apply"] = backend.run_job(apply_pe, (case.pk, encapsulation_coins(entry, case.seed)))
    if ct != case.ct:
        result.field = "ct"
        return result
    if ss != case.ss:
        result.field = "ss"
        return result

    ss_verify, result.timings["verify"] = backend.run_job(verify_pe, (case.sk, ct))
    if ss_verify != case.ss:
        result.field = "ss"
        return result
    result.passed = True
    return result


def _check_sign_case(backend, entry: SchemeEntry, case: KatSignCase) -> CaseResult:
    result = CaseResult(count=case.count, passed=False)
    apply_pe = backend.descriptor(entry, entry.apply_operation)
    verify_pe = backend.descriptor(entry, entry.verify_operation)

    sm, result.timings["apply"] = backend.run_job(apply_pe, (case.sk, case.msg))
    if sm != case.sm:
        result.field = "sm"
        return result

    msg, result.timings["verify"] = backend.run_job(verify_pe, (case.pk, sm))
    if msg != case.msg:
        result.field = "msg"
        return result
    result.passed = True
    return result


def _check_case(backend, entry: SchemeEntry, case: Case) -> CaseResult:
    try:
        if isinstance(case, KatKemCase):
            result = _check_kem_case(backend, entry, case)
        else:
            result = _check_sign_case(backend, entry, case)
    except Exception as e:
        logger.error(f"{entry.algname} case {case.count}: backend fault: {str(e)}")
        return CaseResult(count=case.count, passed=False, error=f"{type(e).__name__}: {e}")

    if result.passed:
        logger.debug(f"{entry.algname} case {case.count} passed")
    else:
        logger.error(f"{entry.algname} case {case.count} failed on field '{result.field}'")
    return result


def run_kat(backend, entry: SchemeEntry, file: KatFile, workers: Optional[int] = None) -> KatReport:
    """Pass every case through the apply PE, then the verify PE, comparing all outputs."""
    expected = KatKemCase if entry.is_kem else KatSignCase
    if any(not isinstance(case, expected) for case in file.cases):
        raise InvalidArgumentError(f"KAT file '{file.header}' does not hold {entry.algname} cases")

    workers = workers or KAT_WORKERS
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: _check_case(backend, entry, c), file.cases))
    else:
        results = [_check_case(backend, entry, case) for case in file.cases]

    report = KatReport(algorithm=entry.algname, backend=backend.name, results=results)
    logger.info(f"{entry.algname} on {backend.name} backend: {report.passed}/{len(results)} cases passed")
    return report
