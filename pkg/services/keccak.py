"""FIPS-202 Keccak-f[1600] permutation with the SHA-3 and SHAKE sponge modes.

The sponge keeps its state as a plain 200-byte buffer; lanes are loaded
little-endian before each permutation and stored back afterwards.
"""
import logging
import struct
from typing import List, Sequence, Tuple

from errors import InvalidArgumentError

# Configure logging
logger = logging.getLogger(__name__)

_MASK = 0xFFFFFFFFFFFFFFFF
_LANES = struct.Struct("<25Q")

_RC = [
    0x0000000000000001, 0x0000000000008082, 0x800000000000808A, 0x8000000080008000,
    0x000000000000808B, 0x0000000080000001, 0x8000000080008081, 0x8000000000008009,
    0x000000000000008A, 0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
    0x000000008000808B, 0x800000000000008B, 0x8000000000008089, 0x8000000000008003,
    0x8000000000008002, 0x8000000000000080, 0x000000000000800A, 0x800000008000000A,
    0x8000000080008081, 0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
]

SHA3_SUFFIX = 0x06
SHAKE_SUFFIX = 0x1F
VALID_RATES = frozenset({168, 136, 104, 72})

# kind -> (rate in bytes, domain suffix, digest size or None for XOFs)
KINDS = {
    "sha3_256": (136, SHA3_SUFFIX, 32),
    "sha3_384": (104, SHA3_SUFFIX, 48),
    "sha3_512": (72, SHA3_SUFFIX, 64),
    "shake128": (168, SHAKE_SUFFIX, None),
    "shake256": (136, SHAKE_SUFFIX, None),
}


def _rol(x: int, n: int) -> int:
    return ((x << n) | (x >> (64 - n))) & _MASK


def keccak_permute(lanes: Sequence[int]) -> List[int]:
    """Apply the 24 rounds of Keccak-f[1600] to 25 lanes indexed x + 5*y."""
    (a0, a1, a2, a3, a4,
     a5, a6, a7, a8, a9,
     a10, a11, a12, a13, a14,
     a15, a16, a17, a18, a19,
     a20, a21, a22, a23, a24) = lanes

    for rc in _RC:
        # Theta
        c0 = a0 ^ a5 ^ a10 ^ a15 ^ a20
        c1 = a1 ^ a6 ^ a11 ^ a16 ^ a21
        c2 = a2 ^ a7 ^ a12 ^ a17 ^ a22
        c3 = a3 ^ a8 ^ a13 ^ a18 ^ a23
        c4 = a4 ^ a9 ^ a14 ^ a19 ^ a24
        d0 = c4 ^ _rol(c1, 1)
        d1 = c0 ^ _rol(c2, 1)
        d2 = c1 ^ _rol(c3, 1)
        d3 = c2 ^ _rol(c4, 1)
        d4 = c3 ^ _rol(c0, 1)

        # Rho and Pi: lane (x, y) moves to (y, 2x + 3y)
        b0 = a0 ^ d0
        b10 = _rol(a1 ^ d1, 1)
        b20 = _rol(a2 ^ d2, 62)
        b5 = _rol(a3 ^ d3, 28)
        b15 = _rol(a4 ^ d4, 27)
        b16 = _rol(a5 ^ d0, 36)
        b1 = _rol(a6 ^ d1, 44)
        b11 = _rol(a7 ^ d2, 6)
        b21 = _rol(a8 ^ d3, 55)
        b6 = _rol(a9 ^ d4, 20)
        b7 = _rol(a10 ^ d0, 3)
        b17 = _rol(a11 ^ d1, 10)
        b2 = _rol(a12 ^ d2, 43)
        b12 = _rol(a13 ^ d3, 25)
        b22 = _rol(a14 ^ d4, 39)
        b23 = _rol(a15 ^ d0, 41)
        b8 = _rol(a16 ^ d1, 45)
        b18 = _rol(a17 ^ d2, 15)
        b3 = _rol(a18 ^ d3, 21)
        b13 = _rol(a19 ^ d4, 8)
        b14 = _rol(a20 ^ d0, 18)
        b24 = _rol(a21 ^ d1, 2)
        b9 = _rol(a22 ^ d2, 61)
        b19 = _rol(a23 ^ d3, 56)
        b4 = _rol(a24 ^ d4, 14)

        # Chi and Iota
        a0 = b0 ^ (~b1 & b2) ^ rc
        a1 = b1 ^ (~b2 & b3)
        a2 = b2 ^ (~b3 & b4)
        a3 = b3 ^ (~b4 & b0)
        a4 = b4 ^ (~b0 & b1)
        a5 = b5 ^ (~b6 & b7)
        a6 = b6 ^ (~b7 & b8)
        a7 = b7 ^ (~b8 & b9)
        a8 = b8 ^ (~b9 & b5)
        a9 = b9 ^ (~b5 & b6)
        a10 = b10 ^ (~b11 & b12)
        a11 = b11 ^ (~b12 & b13)
        a12 = b12 ^ (~b13 & b14)
        a13 = b13 ^ (~b14 & b10)
        a14 = b14 ^ (~b10 & b11)
        a15 = b15 ^ (~b16 & b17)
        a16 = b16 ^ (~b17 & b18)
        a17 = b17 ^ (~b18 & b19)
        a18 = b18 ^ (~b19 & b15)
        a19 = b19 ^ (~b15 & b16)
        a20 = b20 ^ (~b21 & b22)
        a21 = b21 ^ (~b22 & b23)
        a22 = b22 ^ (~b23 & b24)
        a23 = b23 ^ (~b24 & b20)
        a24 = b24 ^ (~b20 & b21)

    return [a0, a1, a2, a3, a4, a5, a6, a7, a8, a9, a10, a11, a12,
            a13, a14, a15, a16, a17, a18, a19, a20, a21, a22, a23, a24]


class KeccakState:
    """Sponge state: 200-byte buffer, rate, domain suffix and absorb/squeeze position."""

    def __init__(self, rate_bytes: int, suffix: int, state: bytes = None):
        if rate_bytes not in VALID_RATES:
            raise InvalidArgumentError(f"Unsupported Keccak rate: {rate_bytes}")
        self.rate_bytes = rate_bytes
        self.suffix = suffix
        self.state = bytearray(200) if state is None else bytearray(state)
        if len(self.state) != 200:
            raise InvalidArgumentError("Keccak state must be 200 bytes")
        self.position = 0
        self.squeezing = False

    @property
    def lanes(self) -> Tuple[int, ...]:
        return _LANES.unpack(self.state)

    def copy(self) -> "KeccakState":
        clone = KeccakState(self.rate_bytes, self.suffix, self.state)
        clone.position = self.position
        clone.squeezing = self.squeezing
        return clone

    def permute(self) -> None:
        self.state[:] = _LANES.pack(*keccak_permute(_LANES.unpack(self.state)))

    def _xor_into(self, offset: int, chunk: bytes) -> None:
        n = len(chunk)
        mixed = int.from_bytes(self.state[offset:offset + n], "little") ^ int.from_bytes(chunk, "little")
        self.state[offset:offset + n] = mixed.to_bytes(n, "little")

    def absorb(self, data: bytes) -> "KeccakState":
        """Absorb more input; may be called any number of times before squeezing."""
        if self.squeezing:
            raise InvalidArgumentError("Cannot absorb after squeezing has started")
        view = memoryview(bytes(data))
        offset = 0
        while offset < len(view):
            take = min(self.rate_bytes - self.position, len(view) - offset)
            self._xor_into(self.position, view[offset:offset + take])
            self.position += take
            offset += take
            if self.position == self.rate_bytes:
                self.permute()
                self.position = 0
        return self

    def _finalize(self) -> None:
        self._xor_into(self.position, bytes([self.suffix]))
        self._xor_into(self.rate_bytes - 1, b"\x80")
        self.permute()
        self.position = 0
        self.squeezing = True

    def squeeze(self, n: int) -> bytes:
        """Return the next n output bytes; successive calls continue the stream."""
        if n < 0:
            raise InvalidArgumentError("Output length must be non-negative")
        if not self.squeezing:
            self._finalize()
        out = bytearray()
        while n > 0:
            if self.position == self.rate_bytes:
                self.permute()
                self.position = 0
            take = min(self.rate_bytes - self.position, n)
            out += self.state[self.position:self.position + take]
            self.position += take
            n -= take
        return bytes(out)


def keccak_f1600(state: KeccakState) -> KeccakState:
    """Return a copy of `state` with the permutation applied."""
    permuted = state.copy()
    permuted.permute()
    return permuted


def new(kind: str) -> KeccakState:
    """Fresh sponge for one of the KINDS."""
    try:
        rate, suffix, _ = KINDS[kind]
    except KeyError:
        raise InvalidArgumentError(f"Unknown Keccak mode: {kind}")
    return KeccakState(rate, suffix)


def digest(kind: str, msg: bytes) -> bytes:
    """Fixed-length SHA-3 digest."""
    if kind not in KINDS or KINDS[kind][2] is None:
        raise InvalidArgumentError(f"{kind} is not a fixed-length digest")
    return new(kind).absorb(msg).squeeze(KINDS[kind][2])


def xof(kind: str, msg: bytes, outlen: int) -> bytes:
    """SHAKE output of `outlen` bytes."""
    if kind not in ("shake128", "shake256"):
        raise InvalidArgumentError(f"{kind} is not an extendable-output function")
    return new(kind).absorb(msg).squeeze(outlen)


def sha3_256(msg: bytes) -> bytes:
    return digest("sha3_256", msg)


def sha3_512(msg: bytes) -> bytes:
    return digest("sha3_512", msg)


def shake128(msg: bytes, outlen: int) -> bytes:
    return xof("shake128", msg, outlen)


def shake256(msg: bytes, outlen: int) -> bytes:
    return xof("shake256", msg, outlen)
