"""Generic NIST PQC KEM/DSA interface over the registered parameter sets.

Each SchemeEntry binds one (family, level) to its params record and engine
functions; everything downstream (KAT runner, device backends, bench) goes
through this module and never touches an engine directly.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Tuple, Union

from config import ERROR_INVALID_COMBO
from errors import InvalidArgumentError, NotFoundError
from models import AlgorithmId, Family, Operation
from services import dilithium, kyber
from services.dilithium import SigParams
from services.kyber import KemParams

# Configure logging
logger = logging.getLogger(__name__)

KERNEL_SCHEMA_VERSION = 1
_FAMILY_ID_BASE = {Family.KYBER: 10, Family.DILITHIUM: 20}
_OPERATION_SUFFIX = {
    Operation.ENCAPSULATE: "enc",
    Operation.DECAPSULATE: "dec",
    Operation.SIGN: "sign",
    Operation.VERIFY: "verify",
}


@dataclass(frozen=True)
class SchemeEntry:
    """One registered scheme instance with its engine bindings."""
    family: Family
    nist_level: int
    params: Union[KemParams, SigParams]
    keygen: Callable = field(compare=False, repr=False)
    apply: Callable = field(compare=False, repr=False)
    verify: Callable = field(compare=False, repr=False)
    # Encapsulation takes its randombytes buffer as an explicit argument
    coins_extension: bool = False
    # randombytes() lengths consumed by keygen, in call order
    keygen_draws: Tuple[int, ...] = ()
    apply_with_stats: Optional[Callable] = field(default=None, compare=False, repr=False)

    @property
    def id(self) -> AlgorithmId:
        return AlgorithmId(self.family, self.nist_level)

    @property
    def is_kem(self) -> bool:
        return isinstance(self.params, KemParams)

    @property
    def algname(self) -> str:
        """CRYPTO_ALGNAME of the reference implementation."""
        return self.params.name

    @property
    def apply_operation(self) -> Operation:
        return Operation.ENCAPSULATE if self.is_kem else Operation.SIGN

    @property
    def verify_operation(self) -> Operation:
        return Operation.DECAPSULATE if self.is_kem else Operation.VERIFY

    @property
    def operations(self) -> Tuple[Operation, ...]:
        return (Operation.KEYPAIR, self.apply_operation, self.verify_operation)

    @property
    def parameter_value(self) -> int:
        """KYBER_K or DILITHIUM_MODE."""
        return self.params.kyber_k if self.is_kem else self.params.mode

    @property
    def compiler_flag(self) -> str:
        if self.is_kem:
            return f"-DKYBER_K={self.params.kyber_k}"
        return f"-DDILITHIUM_MODE={self.params.mode}"

    @property
    def kat_filename(self) -> str:
        kind = "kem" if self.is_kem else "sign"
        return f"PQC{kind}KAT_{self.params.sk_len}.rsp"


class SchemeRegistry:
    """Immutable (family, level) -> SchemeEntry mapping."""

    def __init__(self, entries: List[SchemeEntry]):
        table: Dict[Tuple[Family, int], SchemeEntry] = {}
        for entry in entries:
            key = (entry.family, entry.nist_level)
            if key in table:
                raise InvalidArgumentError(f"Duplicate scheme registration: {entry.family.value} level {entry.nist_level}")
            table[key] = entry
        self._entries = table

    def __iter__(self) -> Iterator[SchemeEntry]:
        return iter(self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)

    def combos(self) -> List[Tuple[str, int]]:
        return [(family.value, level) for family, level in self._entries]

    def lookup(self, family: Union[str, Family], level: int) -> SchemeEntry:
        try:
            return self._entries[(Family(family), int(level))]
        except (KeyError, ValueError):
            combos = ", ".join(f"{f}/{l}" for f, l in self.combos())
            raise NotFoundError(ERROR_INVALID_COMBO.format(family=family, level=level, combos=combos))

    def with_entry(self, entry: SchemeEntry) -> "SchemeRegistry":
        """Copy of this registry extended by one entry."""
        return SchemeRegistry(list(self._entries.values()) + [entry])


def kyber_entry(params: KemParams) -> SchemeEntry:
    return SchemeEntry(
        family=Family.KYBER,
        nist_level=params.nist_level,
        params=params,
        keygen=kyber.kem_keypair,
        apply=kyber.kem_enc_derand,
        verify=kyber.kem_dec,
        coins_extension=True,
        keygen_draws=(kyber.SYMBYTES, kyber.SYMBYTES),
    )


def dilithium_entry(params: SigParams) -> SchemeEntry:
    return SchemeEntry(
        family=Family.DILITHIUM,
        nist_level=params.nist_level,
        params=params,
        keygen=dilithium.keygen_from_rng,
        apply=dilithium.sign,
        verify=dilithium.verify,
        keygen_draws=(dilithium.SEEDBYTES,),
        apply_with_stats=dilithium.sign_with_stats,
    )


DEFAULT_REGISTRY = SchemeRegistry(
    [kyber_entry(p) for p in (kyber.KYBER512, kyber.KYBER768, kyber.KYBER1024)]
    + [dilithium_entry(p) for p in (dilithium.DILITHIUM2, dilithium.DILITHIUM3, dilithium.DILITHIUM5)]
)


def registry_lookup(family: Union[str, Family], level: int, registry: SchemeRegistry = DEFAULT_REGISTRY) -> SchemeEntry:
    """Entry for a (family, level) combination or NotFoundError."""
    return registry.lookup(family, level)


def _require_kem(entry: SchemeEntry, expected: bool) -> None:
    if entry.is_kem != expected:
        kind = "KEM" if expected else "signature scheme"
        raise InvalidArgumentError(f"{entry.algname} is not a {kind}")


def keypair(entry: SchemeEntry, rng) -> Tuple[bytes, bytes]:
    """Software-only key generation drawing from a NistRandom."""
    return entry.keygen(rng, entry.params)


def kem_apply(entry: SchemeEntry, pk: bytes, coins: Optional[bytes] = None) -> Tuple[bytes, bytes]:
    """Encapsulate; `coins` is mandatory for entries with the coins extension."""
    _require_kem(entry, True)
    if entry.coins_extension:
        if coins is None:
            raise InvalidArgumentError(f"{entry.algname} encapsulation requires coins")
        return entry.apply(pk, coins, entry.params)
    return entry.apply(pk, entry.params)


def kem_encapsulate(entry: SchemeEntry, pk: bytes, rng) -> Tuple[bytes, bytes]:
    """Standard encapsulation drawing its coins from a NistRandom."""
    coins = rng.randombytes(entry.params.coins_len) if entry.coins_extension else None
    return kem_apply(entry, pk, coins)


def kem_verify(entry: SchemeEntry, sk: bytes, ct: bytes) -> bytes:
    _require_kem(entry, True)
    return entry.verify(sk, ct, entry.params)


def sig_apply(entry: SchemeEntry, sk: bytes, msg: bytes) -> bytes:
    _require_kem(entry, False)
    return entry.apply(sk, msg, entry.params)


def sig_apply_with_stats(entry: SchemeEntry, sk: bytes, msg: bytes) -> Tuple[bytes, Optional[int]]:
    _require_kem(entry, False)
    if entry.apply_with_stats is None:
        return entry.apply(sk, msg, entry.params), None
    return entry.apply_with_stats(sk, msg, entry.params)


def sig_verify(entry: SchemeEntry, pk: bytes, sm: bytes) -> Optional[bytes]:
    """Embedded message, or None on reject."""
    _require_kem(entry, False)
    return entry.verify(pk, sm, entry.params)


def pe_name(entry: SchemeEntry, operation: Union[str, Operation]) -> str:
    """Kernel name, e.g. kyber2_enc or dilithium5_verify."""
    operation = Operation.parse(operation)
    if operation not in (entry.apply_operation, entry.verify_operation):
        raise InvalidArgumentError(f"{entry.algname} has no processing element for {operation.value}")
    return f"{entry.family.value}{entry.parameter_value}_{_OPERATION_SUFFIX[operation]}"


def kernel_descriptor(entry: SchemeEntry, operation: Union[str, Operation]) -> Dict:
    """kernel.json content for one PE; only the compiler flag differs between levels."""
    operation = Operation.parse(operation)
    name = pe_name(entry, operation)
    op_index = 1 if operation == entry.apply_operation else 2
    return {
        "Name": name,
        "Description": f"{entry.algname} {operation.value} (NIST level {entry.nist_level})",
        "Id": _FAMILY_ID_BASE[entry.family] * 100 + entry.nist_level * 10 + op_index,
        "CompilerFlags": entry.compiler_flag,
        "SchemaVersion": KERNEL_SCHEMA_VERSION,
    }
