"""CRYSTALS-Dilithium (round 3, v3.1) for DILITHIUM_MODE = 2, 3, 5, deterministic signing.

Ring elements are numpy int64 arrays of 256 coefficients. Values handed to the
NTT are taken mod q; norm checks and hints work on centered representatives.
"""
import hmac
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config import ERROR_INVALID_LENGTH
from errors import InvalidArgumentError, MalformedInputError
from services.keccak import new as keccak_new, shake256
from utils.bitpack import pack_bits, unpack_bits
from utils.cache import expansion_cache

# Configure logging
logger = logging.getLogger(__name__)

Q = 8380417
N = 256
D = 13
SEEDBYTES = 32
CRHBYTES = 64
SHAKE128_RATE = 168
SHAKE256_RATE = 136
N_INV = pow(256, Q - 2, Q)


def _brv8(i: int) -> int:
    return int(f"{i:08b}"[::-1], 2)


ZETAS = np.array([pow(1753, _brv8(i), Q) for i in range(256)], dtype=np.int64)
ZETAS_INV = np.array([pow(int(z), Q - 2, Q) for z in ZETAS], dtype=np.int64)


@dataclass(frozen=True)
class SigParams:
    name: str
    mode: int
    k: int
    l: int
    eta: int
    tau: int
    gamma1: int
    gamma2: int
    omega: int

    @property
    def nist_level(self) -> int:
        return self.mode

    @property
    def beta(self) -> int:
        return self.tau * self.eta

    @property
    def eta_bits(self) -> int:
        return 3 if self.eta == 2 else 4

    @property
    def z_bits(self) -> int:
        return 18 if self.gamma1 == 1 << 17 else 20

    @property
    def w1_bits(self) -> int:
        return 6 if self.gamma2 == (Q - 1) // 88 else 4

    @property
    def polyz_bytes(self) -> int:
        return N * self.z_bits // 8

    @property
    def pk_len(self) -> int:
        return SEEDBYTES + self.k * N * 10 // 8

    @property
    def sk_len(self) -> int:
        return 3 * SEEDBYTES + (self.l + self.k) * N * self.eta_bits // 8 + self.k * N * D // 8

    @property
    def sig_len(self) -> int:
        return SEEDBYTES + self.l * self.polyz_bytes + self.omega + self.k


DILITHIUM2 = SigParams("Dilithium2", mode=2, k=4, l=4, eta=2, tau=39,
                       gamma1=1 << 17, gamma2=(Q - 1) // 88, omega=80)
DILITHIUM3 = SigParams("Dilithium3", mode=3, k=6, l=5, eta=4, tau=49,
                       gamma1=1 << 19, gamma2=(Q - 1) // 32, omega=55)
DILITHIUM5 = SigParams("Dilithium5", mode=5, k=8, l=7, eta=2, tau=60,
                       gamma1=1 << 19, gamma2=(Q - 1) // 32, omega=75)
PARAMS_BY_MODE = {p.mode: p for p in (DILITHIUM2, DILITHIUM3, DILITHIUM5)}


def _check_len(name: str, data: bytes, expected: int) -> None:
    if len(data) != expected:
        raise InvalidArgumentError(ERROR_INVALID_LENGTH.format(name=name, expected=expected, actual=len(data)))


def _scalar_or_array(x):
    return int(x) if np.ndim(x) == 0 else x


def centered(r) -> np.ndarray:
    """Representative of r mod q in (-(q-1)/2, (q-1)/2]."""
    r = np.asarray(r, dtype=np.int64) % Q
    return np.where(r > (Q - 1) // 2, r - Q, r)


# Ring arithmetic

def ntt(p: np.ndarray) -> np.ndarray:
    """Forward 8-layer NTT over the last axis."""
    a = np.asarray(p, dtype=np.int64) % Q
    shape = a.shape
    length = 128
    while length >= 1:
        blocks = 128 // length
        a = a.reshape(shape[:-1] + (blocks, 2, length))
        zeta = ZETAS[blocks:2 * blocks].reshape(blocks, 1)
        t = (zeta * a[..., 1, :]) % Q
        a = np.stack(((a[..., 0, :] + t) % Q, (a[..., 0, :] - t) % Q), axis=-2)
        length //= 2
    return a.reshape(shape)


def inv_ntt(p: np.ndarray) -> np.ndarray:
    """Exact inverse of ntt()."""
    a = np.asarray(p, dtype=np.int64) % Q
    shape = a.shape
    length = 1
    while length <= 128:
        blocks = 128 // length
        a = a.reshape(shape[:-1] + (blocks, 2, length))
        zeta_inv = ZETAS_INV[blocks:2 * blocks].reshape(blocks, 1)
        x, y = a[..., 0, :], a[..., 1, :]
        a = np.stack(((x + y) % Q, ((x - y) * zeta_inv) % Q), axis=-2)
        length *= 2
    return (a.reshape(shape) * N_INV) % Q


def pointwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (np.asarray(a, dtype=np.int64) % Q) * (np.asarray(b, dtype=np.int64) % Q) % Q


def _matvec(matrix: np.ndarray, vec: np.ndarray) -> np.ndarray:
    return pointwise(matrix, vec[None, :, :]).sum(axis=1) % Q


# Rounding and hints

def power2round(r):
    """r = r1 * 2^13 + r0 with r0 in (-2^12, 2^12]."""
    r = np.asarray(r, dtype=np.int64) % Q
    r1 = (r + (1 << (D - 1)) - 1) >> D
    r0 = r - (r1 << D)
    return _scalar_or_array(r1), _scalar_or_array(r0)


def decompose(r, gamma2: int):
    """r = r1 * 2*gamma2 + r0 with r0 centered, folding r - r0 = q - 1 into r1 = 0."""
    r = np.asarray(r, dtype=np.int64) % Q
    alpha = 2 * gamma2
    r0 = r % alpha
    r0 = np.where(r0 > gamma2, r0 - alpha, r0)
    wrap = (r - r0) == Q - 1
    r1 = np.where(wrap, 0, (r - r0) // alpha)
    r0 = np.where(wrap, r0 - 1, r0)
    return _scalar_or_array(r1), _scalar_or_array(r0)


def high_bits(r, gamma2: int):
    return decompose(r, gamma2)[0]


def low_bits(r, gamma2: int):
    return decompose(r, gamma2)[1]


def make_hint(z, r, gamma2: int):
    """1 where adding z to r changes its high bits."""
    r = np.asarray(r, dtype=np.int64)
    changed = np.asarray(high_bits(r, gamma2)) != np.asarray(high_bits(r + np.asarray(z, dtype=np.int64), gamma2))
    return _scalar_or_array(changed.astype(np.int64))


def make_hint_lowbits(a0, a1, gamma2: int) -> np.ndarray:
    """Hint from centered low part a0 and high part a1, as the signer computes it."""
    a0 = np.asarray(a0, dtype=np.int64)
    a1 = np.asarray(a1, dtype=np.int64)
    hint = (a0 > gamma2) | (a0 < -gamma2) | ((a0 == -gamma2) & (a1 != 0))
    return hint.astype(np.int64)


def use_hint(h, r, gamma2: int):
    """Correct the high bits of r by one step in the direction of its low bits."""
    r1, r0 = decompose(r, gamma2)
    m = (Q - 1) // (2 * gamma2)
    r1 = np.asarray(r1)
    stepped = np.where(np.asarray(r0) > 0, (r1 + 1) % m, (r1 - 1) % m)
    return _scalar_or_array(np.where(np.asarray(h) != 0, stepped, r1))


# Sampling

def _rej_uniform(stream) -> np.ndarray:
    coeffs = np.empty(0, dtype=np.int64)
    buf = stream.squeeze(5 * SHAKE128_RATE)
    while True:
        t = np.frombuffer(buf, dtype=np.uint8).astype(np.int64).reshape(-1, 3)
        values = (t[:, 0] | (t[:, 1] << 8) | (t[:, 2] << 16)) & 0x7FFFFF
        coeffs = np.concatenate((coeffs, values[values < Q]))
        if coeffs.size >= N:
            return coeffs[:N]
        buf = stream.squeeze(SHAKE128_RATE)


@expansion_cache
def expand_matrix(rho: bytes, k: int, l: int) -> np.ndarray:
    """k x l public matrix in the NTT domain; entry (i, j) from SHAKE128(rho || j || i)."""
    _check_len("rho", rho, SEEDBYTES)
    matrix = np.empty((k, l, N), dtype=np.int64)
    for i in range(k):
        for j in range(l):
            matrix[i, j] = _rej_uniform(keccak_new("shake128").absorb(bytes(rho) + bytes([j, i])))
    return matrix


def uniform_eta(seed: bytes, nonce: int, eta: int) -> np.ndarray:
    """Secret polynomial with centered coefficients in [-eta, eta]."""
    stream = keccak_new("shake256").absorb(bytes(seed) + (nonce & 0xFFFF).to_bytes(2, "little"))
    buf = stream.squeeze(SHAKE256_RATE * (1 if eta == 2 else 2))
    coeffs = np.empty(0, dtype=np.int64)
    while True:
        b = np.frombuffer(buf, dtype=np.uint8).astype(np.int64)
        nibbles = np.stack((b & 0x0F, b >> 4), axis=1).reshape(-1)
        if eta == 2:
            accepted = 2 - nibbles[nibbles < 15] % 5
        else:
            accepted = 4 - nibbles[nibbles < 9]
        coeffs = np.concatenate((coeffs, accepted))
        if coeffs.size >= N:
            return coeffs[:N]
        buf = stream.squeeze(SHAKE256_RATE)


def uniform_gamma1(seed: bytes, nonce: int, params: SigParams) -> np.ndarray:
    """Masking polynomial with coefficients in (-gamma1, gamma1]."""
    buf = shake256(bytes(seed) + (nonce & 0xFFFF).to_bytes(2, "little"), params.polyz_bytes)
    return params.gamma1 - unpack_bits(buf, params.z_bits, N)


def sample_in_ball(seed: bytes, tau: int) -> np.ndarray:
    """Challenge polynomial with exactly tau coefficients equal to +-1 (mod q)."""
    stream = keccak_new("shake256").absorb(seed)
    buf = stream.squeeze(SHAKE256_RATE)
    signs = int.from_bytes(buf[:8], "little")
    pos = 8
    c = np.zeros(N, dtype=np.int64)
    for i in range(N - tau, N):
        while True:
            if pos >= SHAKE256_RATE:
                buf = stream.squeeze(SHAKE256_RATE)
                pos = 0
            b = buf[pos]
            pos += 1
            if b <= i:
                break
        c[i] = c[b]
        c[b] = 1 - 2 * (signs & 1)
        signs >>= 1
    return c % Q


# Packing

def pack_t1(t1: np.ndarray) -> bytes:
    return pack_bits(t1, 10)


def unpack_t1(data: bytes, k: int) -> np.ndarray:
    return unpack_bits(data, 10, k * N).reshape(k, N)


def pack_t0(t0: np.ndarray) -> bytes:
    return pack_bits((1 << (D - 1)) - np.asarray(t0), D)


def unpack_t0(data: bytes, k: int) -> np.ndarray:
    return ((1 << (D - 1)) - unpack_bits(data, D, k * N)).reshape(k, N)


def pack_eta(s: np.ndarray, params: SigParams) -> bytes:
    return pack_bits(params.eta - np.asarray(s), params.eta_bits)


def unpack_eta(data: bytes, rows: int, params: SigParams) -> np.ndarray:
    return (params.eta - unpack_bits(data, params.eta_bits, rows * N)).reshape(rows, N)


def pack_z(z: np.ndarray, params: SigParams) -> bytes:
    return pack_bits(params.gamma1 - np.asarray(z), params.z_bits)


def unpack_z(data: bytes, params: SigParams) -> np.ndarray:
    return (params.gamma1 - unpack_bits(data, params.z_bits, params.l * N)).reshape(params.l, N)


def pack_w1(w1: np.ndarray, params: SigParams) -> bytes:
    return pack_bits(w1, params.w1_bits)


def pack_hint(h: np.ndarray, params: SigParams) -> bytes:
    """Positions of the ones per polynomial, then cumulative counts at offset omega."""
    out = bytearray(params.omega + params.k)
    idx = 0
    for i, row in enumerate(np.asarray(h)):
        for j in np.flatnonzero(row):
            out[idx] = int(j)
            idx += 1
        out[params.omega + i] = idx
    return bytes(out)


def unpack_hint(data: bytes, params: SigParams) -> Optional[np.ndarray]:
    """Decode a hint; None if indices are unordered, counts out of range or padding nonzero."""
    h = np.zeros((params.k, N), dtype=np.int64)
    idx = 0
    for i in range(params.k):
        end = data[params.omega + i]
        if end < idx or end > params.omega:
            return None
        for j in range(idx, end):
            if j > idx and data[j] <= data[j - 1]:
                return None
            h[i, data[j]] = 1
        idx = end
    if any(data[idx:params.omega]):
        return None
    return h


def _unpack_sk(sk: bytes, params: SigParams):
    rho, key, tr = sk[:32], sk[32:64], sk[64:96]
    offset = 96
    s1_len = params.l * N * params.eta_bits // 8
    s2_len = params.k * N * params.eta_bits // 8
    s1 = unpack_eta(sk[offset:offset + s1_len], params.l, params)
    offset += s1_len
    s2 = unpack_eta(sk[offset:offset + s2_len], params.k, params)
    offset += s2_len
    t0 = unpack_t0(sk[offset:], params.k)
    return rho, key, tr, s1, s2, t0


# Signature scheme

def keygen(seed: bytes, params: SigParams) -> Tuple[bytes, bytes]:
    """Deterministic keypair from a 32-byte seed."""
    _check_len("keygen seed", seed, SEEDBYTES)
    buf = shake256(seed, 2 * SEEDBYTES + CRHBYTES)
    rho, rhoprime, key = buf[:SEEDBYTES], buf[SEEDBYTES:SEEDBYTES + CRHBYTES], buf[SEEDBYTES + CRHBYTES:]

    a_hat = expand_matrix(rho, params.k, params.l)
    s1 = np.stack([uniform_eta(rhoprime, i, params.eta) for i in range(params.l)])
    s2 = np.stack([uniform_eta(rhoprime, params.l + i, params.eta) for i in range(params.k)])
    t = (inv_ntt(_matvec(a_hat, ntt(s1))) + s2) % Q
    t1, t0 = power2round(t)

    pk = rho + pack_t1(t1)
    tr = shake256(pk, SEEDBYTES)
    sk = rho + key + tr + pack_eta(s1, params) + pack_eta(s2, params) + pack_t0(t0)
    return pk, sk


def keygen_from_rng(rng, params: SigParams) -> Tuple[bytes, bytes]:
    return keygen(rng.randombytes(SEEDBYTES), params)


def sign_with_stats(sk: bytes, msg: bytes, params: SigParams) -> Tuple[bytes, int]:
    """Sign and also report how many rejection-loop iterations were needed."""
    _check_len("secret key", sk, params.sk_len)
    msg = bytes(msg)
    rho, key, tr, s1, s2, t0 = _unpack_sk(sk, params)
    mu = shake256(tr + msg, CRHBYTES)
    rhoprime = shake256(key + mu, CRHBYTES)

    a_hat = expand_matrix(rho, params.k, params.l)
    s1_hat, s2_hat, t0_hat = ntt(s1), ntt(s2), ntt(t0)
    gamma1, gamma2, beta = params.gamma1, params.gamma2, params.beta

    attempts = 0
    while True:
        y = np.stack([uniform_gamma1(rhoprime, params.l * attempts + i, params) for i in range(params.l)])
        attempts += 1
        w = inv_ntt(_matvec(a_hat, ntt(y)))
        w1, w0 = decompose(w, gamma2)
        c_tilde = shake256(mu + pack_w1(w1, params), SEEDBYTES)
        c_hat = ntt(sample_in_ball(c_tilde, params.tau))

        z = centered(y + inv_ntt(pointwise(c_hat, s1_hat)))
        if np.abs(z).max() >= gamma1 - beta:
            continue
        r0 = centered(w0 - inv_ntt(pointwise(c_hat, s2_hat)))
        if np.abs(r0).max() >= gamma2 - beta:
            continue
        ct0 = centered(inv_ntt(pointwise(c_hat, t0_hat)))
        if np.abs(ct0).max() >= gamma2:
            continue
        h = make_hint_lowbits(r0 + ct0, w1, gamma2)
        if h.sum() > params.omega:
            continue
        break

    assert np.abs(z).max() < gamma1 - beta
    sig = c_tilde + pack_z(z, params) + pack_hint(h, params)
    logger.debug(f"{params.name} signature accepted after {attempts} attempts")
    return sig + msg, attempts


def sign(sk: bytes, msg: bytes, params: SigParams) -> bytes:
    """Attached signature: sig || msg."""
    return sign_with_stats(sk, msg, params)[0]


def _verify_detached(pk: bytes, sig: bytes, msg: bytes, params: SigParams) -> bool:
    rho = pk[:SEEDBYTES]
    t1 = unpack_t1(pk[SEEDBYTES:], params.k)
    c_tilde = sig[:SEEDBYTES]
    z_end = SEEDBYTES + params.l * params.polyz_bytes
    z = unpack_z(sig[SEEDBYTES:z_end], params)
    h = unpack_hint(sig[z_end:], params)
    if h is None:
        return False
    if np.abs(z).max() >= params.gamma1 - params.beta:
        return False

    mu = shake256(shake256(pk, SEEDBYTES) + msg, CRHBYTES)
    c_hat = ntt(sample_in_ball(c_tilde, params.tau))
    a_hat = expand_matrix(rho, params.k, params.l)
    w_approx = inv_ntt(_matvec(a_hat, ntt(z)) - pointwise(c_hat, ntt(t1 << D)))
    w1 = use_hint(h, w_approx, params.gamma2)
    return hmac.compare_digest(c_tilde, shake256(mu + pack_w1(w1, params), SEEDBYTES))


def verify(pk: bytes, sm: bytes, params: SigParams) -> Optional[bytes]:
    """Open an attached signature; the message on success, None on reject."""
    _check_len("public key", pk, params.pk_len)
    if len(sm) < params.sig_len:
        raise MalformedInputError(f"Signed message shorter than {params.sig_len} bytes: {len(sm)}")
    sig, msg = bytes(sm[:params.sig_len]), bytes(sm[params.sig_len:])
    if _verify_detached(pk, sig, msg, params):
        return msg
    return None
