"""AES-256 CTR DRBG with the semantics of the NIST PQC submission harness (rng.c).

No derivation function, no prediction resistance, no personalization string.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

from Crypto.Cipher import AES

from errors import InvalidArgumentError

# Configure logging
logger = logging.getLogger(__name__)

SEED_LEN = 48


def aes256_ecb_block(key: bytes, block: bytes) -> bytes:
    """Encrypt a single 16-byte block under a 32-byte AES key."""
    if len(key) != 32:
        raise InvalidArgumentError(f"AES-256 key must be 32 bytes, got {len(key)}")
    if len(block) != 16:
        raise InvalidArgumentError(f"AES block must be 16 bytes, got {len(block)}")
    return AES.new(bytes(key), AES.MODE_ECB).encrypt(bytes(block))


def _increment(v: bytes) -> bytes:
    return ((int.from_bytes(v, "big") + 1) % (1 << 128)).to_bytes(16, "big")


@dataclass(frozen=True)
class DrbgState:
    key: bytes
    v: bytes
    reseed_counter: int


def _update(provided: Optional[bytes], key: bytes, v: bytes) -> Tuple[bytes, bytes]:
    cipher = AES.new(key, AES.MODE_ECB)
    temp = bytearray()
    for _ in range(3):
        v = _increment(v)
        temp += cipher.encrypt(v)
    if provided is not None:
        temp = bytearray(a ^ b for a, b in zip(temp, provided))
    return bytes(temp[:32]), bytes(temp[32:48])


def drbg_init(entropy: bytes) -> DrbgState:
    """Instantiate from 48 bytes of entropy input."""
    if len(entropy) != SEED_LEN:
        raise InvalidArgumentError(f"DRBG entropy must be {SEED_LEN} bytes, got {len(entropy)}")
    key, v = _update(bytes(entropy), bytes(32), bytes(16))
    return DrbgState(key=key, v=v, reseed_counter=1)


def drbg_generate(state: DrbgState, n: int) -> Tuple[bytes, DrbgState]:
    """Return n output bytes and the advanced state.

    The trailing state update runs even when n is 0, as rng.c does.
    """
    if n < 0:
        raise InvalidArgumentError("Requested length must be non-negative")
    cipher = AES.new(state.key, AES.MODE_ECB)
    v = state.v
    out = bytearray()
    while len(out) < n:
        v = _increment(v)
        out += cipher.encrypt(v)
    key, v = _update(None, state.key, v)
    return bytes(out[:n]), DrbgState(key=key, v=v, reseed_counter=state.reseed_counter + 1)


class NistRandom:
    """Mutable randombytes() source owning one DrbgState."""

    def __init__(self, entropy: bytes):
        self.state = drbg_init(entropy)

    def randombytes(self, n: int) -> bytes:
        out, self.state = drbg_generate(self.state, n)
        return out


def kat_seed_schedule(master_entropy: bytes, n: int) -> List[bytes]:
    """Per-case seeds of the KEM KAT generator: consecutive 48-byte draws."""
    if n < 1:
        raise InvalidArgumentError("Seed schedule needs at least one case")
    rng = NistRandom(master_entropy)
    seeds = [rng.randombytes(SEED_LEN) for _ in range(n)]
    logger.debug(f"Expanded {n} KAT seeds")
    return seeds


def kat_sign_schedule(master_entropy: bytes, n: int) -> List[Tuple[bytes, bytes]]:
    """(seed, msg) pairs of the signature KAT generator.

    The message of case i (33*(i+1) bytes) is drawn right after its seed,
    so the two interleave on the master DRBG.
    """
    if n < 1:
        raise InvalidArgumentError("Seed schedule needs at least one case")
    rng = NistRandom(master_entropy)
    schedule = []
    for i in range(n):
        seed = rng.randombytes(SEED_LEN)
        msg = rng.randombytes(33 * (i + 1))
        schedule.append((seed, msg))
    return schedule
