import dataclasses
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, List, Optional, Union


class Family(str, Enum):
    KYBER = "kyber"
    DILITHIUM = "dilithium"


class Operation(str, Enum):
    KEYPAIR = "keypair"
    ENCAPSULATE = "encapsulate"
    DECAPSULATE = "decapsulate"
    SIGN = "sign"
    VERIFY = "verify"

    @property
    def label(self) -> str:
        """Spelling used in the Table-1/Table-2 'Operation' column."""
        return self.value.capitalize()

    @classmethod
    def parse(cls, text: str) -> "Operation":
        """Accept a member, the enum value, the table label or the short forms enc/dec."""
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower()
        key = {"enc": "encapsulate", "dec": "decapsulate"}.get(key, key)
        return cls(key)


class Platform(str, Enum):
    VC709 = "VC709"
    AU280 = "AU280"


class Functionality(str, Enum):
    WORKING = "Working"
    DEADLOCK = "Deadlock"


@dataclass(frozen=True)
class AlgorithmId:
    """An (algorithm, security level[, operation]) triplet."""
    family: Family
    nist_level: int
    operation: Optional[Operation] = None


@dataclass(frozen=True)
class PeDescriptor:
    """One processing element: a single scheme operation on one platform."""
    pe_name: str
    family: Family
    level: int
    operation: Operation
    platform: Platform
    freq_mhz: int
    functionality: Functionality = Functionality.WORKING

    @property
    def deadlock(self) -> bool:
        return self.functionality == Functionality.DEADLOCK


@dataclass(frozen=True)
class OverheadModel:
    """Per-phase job costs of a PE in nanoseconds."""
    start_ns: float
    wait_ns: float
    release_ns: float

    @property
    def total_ns(self) -> float:
        return self.start_ns + self.wait_ns + self.release_ns


@dataclass
class JobTiming:
    start_ns: float
    wait_ns: float
    release_ns: float
    total_ns: float
    # Dilithium sign only: rejection-loop iterations
    attempts: Optional[int] = None


@dataclass
class BenchRecord:
    """Statistics over `runs` sequential jobs of one PE or software baseline."""
    id: str
    runs: int
    mean_total_us: float
    mean_start_ns: float
    mean_wait_ns: float
    mean_release_ns: float
    stddev_total_us: float
    backend: str = "software"
    platform: Optional[str] = None
    valid: bool = True
    mean_attempts: Optional[float] = None
    host: Dict[str, Union[str, int, float]] = dataclasses.field(default_factory=dict)
    # SHA-256 of each job output, kept only for fixed-input workloads
    output_digests: List[str] = dataclasses.field(default_factory=list)

    def to_row(self) -> Dict:
        row = asdict(self)
        row.pop("host")
        row.pop("output_digests")
        row.update({f"host_{k}": v for k, v in self.host.items()})
        return row


@dataclass(frozen=True)
class ResourceRecord:
    """One Table-1 row."""
    pe_name: str
    platform: str
    security_level: int
    operation: str
    freq_mhz: int
    klut: float
    kff: float
    bram: float
    dsp: float
    functionality: str = Functionality.WORKING.value
    algorithm: str = ""


@dataclass
class KatKemCase:
    count: int
    seed: bytes
    pk: bytes
    sk: bytes
    ct: bytes
    ss: bytes


@dataclass
class KatSignCase:
    count: int
    seed: bytes
    mlen: int
    msg: bytes
    pk: bytes
    sk: bytes
    smlen: int
    sm: bytes


@dataclass
class KatFile:
    """Parsed .rsp content: the algorithm-name header and the ordered cases."""
    header: str
    cases: List[Union[KatKemCase, KatSignCase]] = dataclasses.field(default_factory=list)


@dataclass
class CaseResult:
    count: int
    passed: bool
    field: Optional[str] = None
    error: Optional[str] = None
    timings: Dict[str, JobTiming] = dataclasses.field(default_factory=dict)

    def to_dict(self) -> Dict:
        data = {"count": self.count, "passed": self.passed, "field": self.field, "error": self.error}
        if self.timings:
            data["timings"] = {op: asdict(t) for op, t in self.timings.items()}
        return data


@dataclass
class KatReport:
    algorithm: str
    backend: str
    results: List[CaseResult] = dataclasses.field(default_factory=list)

    @property
    def passed(self) -> int:
        return sum(1 for r in self.results if r.passed)

    @property
    def failed(self) -> int:
        return len(self.results) - self.passed

    @property
    def all_passed(self) -> bool:
        return self.failed == 0

    @property
    def pass_vector(self) -> List[bool]:
        return [r.passed for r in self.results]

    def to_dict(self) -> Dict:
        return {
            "algorithm": self.algorithm,
            "backend": self.backend,
            "total": len(self.results),
            "passed": self.passed,
            "failed": self.failed,
            "cases": [r.to_dict() for r in self.results],
        }


@dataclass(frozen=True)
class Comparison:
    total_ratio: float
    overhead_ratio: float

    @property
    def overhead_dominated(self) -> bool:
        return self.overhead_ratio >= 1
