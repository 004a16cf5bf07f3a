"""CRYSTALS-Kyber (round 3, v3.02) for KYBER_K = 2, 3, 4.

Polynomials are numpy int64 arrays of 256 coefficients in [0, q); vectors and
matrices stack them along leading axes. The NTT works on true residues (no
Montgomery factors), so every output is the canonical value the reference
serializes.
"""
import hmac
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from config import ERROR_INVALID_LENGTH
from errors import InvalidArgumentError
from services.keccak import new as keccak_new, sha3_256, sha3_512, shake256
from utils.bitpack import pack_bits, unpack_bits
from utils.cache import expansion_cache

# Configure logging
logger = logging.getLogger(__name__)

Q = 3329
N = 256
SYMBYTES = 32
POLYBYTES = 384
XOF_BLOCKBYTES = 168
# 3 SHAKE128 blocks hold 256 accepted coefficients with high probability
GEN_MATRIX_BYTES = 3 * XOF_BLOCKBYTES
N_INV = 3303  # 128^-1 mod q


def _brv7(i: int) -> int:
    return int(f"{i:07b}"[::-1], 2)


ZETAS = np.array([pow(17, _brv7(i), Q) for i in range(128)], dtype=np.int64)
ZETAS_INV = np.array([pow(int(z), Q - 2, Q) for z in ZETAS], dtype=np.int64)
# basemul pairs alternate +zeta / -zeta
_GAMMAS = np.array([(ZETAS[64 + p // 2] if p % 2 == 0 else -ZETAS[64 + p // 2]) % Q
                    for p in range(128)], dtype=np.int64)


@dataclass(frozen=True)
class KemParams:
    name: str
    kyber_k: int
    nist_level: int
    eta1: int
    eta2: int
    du: int
    dv: int
    ss_len: int = 32
    coins_len: int = 32

    @property
    def polyvec_bytes(self) -> int:
        return POLYBYTES * self.kyber_k

    @property
    def pk_len(self) -> int:
        return self.polyvec_bytes + SYMBYTES

    @property
    def sk_len(self) -> int:
        return self.polyvec_bytes + self.pk_len + 2 * SYMBYTES

    @property
    def ct_len(self) -> int:
        return self.kyber_k * N * self.du // 8 + N * self.dv // 8


KYBER512 = KemParams("Kyber512", kyber_k=2, nist_level=1, eta1=3, eta2=2, du=10, dv=4)
KYBER768 = KemParams("Kyber768", kyber_k=3, nist_level=3, eta1=2, eta2=2, du=10, dv=4)
KYBER1024 = KemParams("Kyber1024", kyber_k=4, nist_level=5, eta1=2, eta2=2, du=11, dv=5)
PARAMS_BY_K = {p.kyber_k: p for p in (KYBER512, KYBER768, KYBER1024)}


def _check_len(name: str, data: bytes, expected: int) -> None:
    if len(data) != expected:
        raise InvalidArgumentError(ERROR_INVALID_LENGTH.format(name=name, expected=expected, actual=len(data)))


# Ring arithmetic

def ntt(p: np.ndarray) -> np.ndarray:
    """Forward NTT over the last axis; output in bit-reversed order."""
    a = np.asarray(p, dtype=np.int64) % Q
    shape = a.shape
    length = 128
    while length >= 2:
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
    length = 2
    while length <= 128:
        blocks = 128 // length
        a = a.reshape(shape[:-1] + (blocks, 2, length))
        zeta_inv = ZETAS_INV[blocks:2 * blocks].reshape(blocks, 1)
        x, y = a[..., 0, :], a[..., 1, :]
        a = np.stack(((x + y) % Q, ((x - y) * zeta_inv) % Q), axis=-2)
        length *= 2
    return (a.reshape(shape) * N_INV) % Q


def basemul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Products in Z_q[X]/(X^2 - gamma) for the 128 coefficient pairs of NTT-domain inputs."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    shape = np.broadcast_shapes(a.shape, b.shape)
    a = a.reshape(a.shape[:-1] + (128, 2))
    b = b.reshape(b.shape[:-1] + (128, 2))
    a0, a1 = a[..., 0], a[..., 1]
    b0, b1 = b[..., 0], b[..., 1]
    r0 = (a0 * b0 + (a1 * b1 % Q) * _GAMMAS) % Q
    r1 = (a0 * b1 + a1 * b0) % Q
    return np.stack((r0, r1), axis=-1).reshape(shape)


def _matvec(matrix: np.ndarray, vec: np.ndarray) -> np.ndarray:
    return basemul(matrix, vec[None, :, :]).sum(axis=1) % Q


def _dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return basemul(u, v).sum(axis=0) % Q


# Sampling

def cbd(eta: int, buf: bytes) -> np.ndarray:
    """Centered binomial sample from 64*eta bytes; coefficients mapped into [0, q)."""
    if eta not in (2, 3):
        raise InvalidArgumentError(f"eta must be 2 or 3, got {eta}")
    _check_len("CBD buffer", buf, 64 * eta)
    bits = unpack_bits(buf, 1).reshape(N, 2, eta).sum(axis=2)
    return (bits[:, 0] - bits[:, 1]) % Q


def prf(key: bytes, nonce: int, outlen: int) -> bytes:
    return shake256(bytes(key) + bytes([nonce]), outlen)


def _getnoise(seed: bytes, nonce: int, eta: int) -> np.ndarray:
    return cbd(eta, prf(seed, nonce, 64 * eta))


def _rej_uniform(stream) -> np.ndarray:
    coeffs = np.empty(0, dtype=np.int64)
    buf = stream.squeeze(GEN_MATRIX_BYTES)
    while True:
        values = unpack_bits(buf, 12)
        coeffs = np.concatenate((coeffs, values[values < Q]))
        if coeffs.size >= N:
            return coeffs[:N]
        buf = stream.squeeze(XOF_BLOCKBYTES)


@expansion_cache
def gen_matrix(rho: bytes, transposed: bool, k: int) -> np.ndarray:
    """Expand rho into the k x k public matrix (NTT domain) by SHAKE128 rejection sampling."""
    _check_len("rho", rho, SYMBYTES)
    matrix = np.empty((k, k, N), dtype=np.int64)
    for i in range(k):
        for j in range(k):
            suffix = bytes([i, j]) if transposed else bytes([j, i])
            matrix[i, j] = _rej_uniform(keccak_new("shake128").absorb(bytes(rho) + suffix))
    return matrix


# Compression and serialization

def compress(x, d: int):
    """round(2^d * x / q) mod 2^d; works on scalars and arrays."""
    return (((np.asarray(x, dtype=np.int64) << d) + Q // 2) // Q) & ((1 << d) - 1)


def decompress(y, d: int):
    """round(q * y / 2^d)."""
    return (np.asarray(y, dtype=np.int64) * Q + (1 << (d - 1))) >> d


def poly_tobytes(p: np.ndarray) -> bytes:
    return pack_bits(np.asarray(p) % Q, 12)


def poly_frombytes(data: bytes, count: int = N) -> np.ndarray:
    return unpack_bits(data, 12, count)


def poly_frommsg(msg: bytes) -> np.ndarray:
    _check_len("message", msg, SYMBYTES)
    return unpack_bits(msg, 1) * ((Q + 1) // 2)


def poly_tomsg(p: np.ndarray) -> bytes:
    return pack_bits(compress(np.asarray(p) % Q, 1), 1)


# IND-CPA layer

def indcpa_keypair(seed: bytes, params: KemParams) -> Tuple[bytes, bytes]:
    k = params.kyber_k
    buf = sha3_512(seed)
    rho, sigma = buf[:SYMBYTES], buf[SYMBYTES:]
    a_hat = gen_matrix(rho, False, k)
    s = np.stack([_getnoise(sigma, i, params.eta1) for i in range(k)])
    e = np.stack([_getnoise(sigma, k + i, params.eta1) for i in range(k)])
    s_hat = ntt(s)
    t_hat = (_matvec(a_hat, s_hat) + ntt(e)) % Q
    pk = poly_tobytes(t_hat) + rho
    sk = poly_tobytes(s_hat)
    return pk, sk


def indcpa_enc(pk: bytes, msg: bytes, coins: bytes, params: KemParams) -> bytes:
    k = params.kyber_k
    t_hat = poly_frombytes(pk[:params.polyvec_bytes], k * N).reshape(k, N)
    rho = pk[params.polyvec_bytes:]
    at_hat = gen_matrix(rho, True, k)
    r = np.stack([_getnoise(coins, i, params.eta1) for i in range(k)])
    e1 = np.stack([_getnoise(coins, k + i, params.eta2) for i in range(k)])
    e2 = _getnoise(coins, 2 * k, params.eta2)
    r_hat = ntt(r)
    u = (inv_ntt(_matvec(at_hat, r_hat)) + e1) % Q
    v = (inv_ntt(_dot(t_hat, r_hat)) + e2 + poly_frommsg(msg)) % Q
    return pack_bits(compress(u, params.du), params.du) + pack_bits(compress(v, params.dv), params.dv)


def indcpa_dec(sk: bytes, ct: bytes, params: KemParams) -> bytes:
    k = params.kyber_k
    split = k * N * params.du // 8
    u = decompress(unpack_bits(ct[:split], params.du, k * N), params.du).reshape(k, N)
    v = decompress(unpack_bits(ct[split:], params.dv, N), params.dv)
    s_hat = poly_frombytes(sk, k * N).reshape(k, N)
    mp = (v - inv_ntt(_dot(s_hat, ntt(u)))) % Q
    return poly_tomsg(mp)


# CCA KEM

def kem_keygen(coins: bytes, params: KemParams) -> Tuple[bytes, bytes]:
    """Keypair from 64 coin bytes: the IND-CPA seed d, then the rejection secret z."""
    _check_len("keypair coins", coins, 2 * SYMBYTES)
    d, z = coins[:SYMBYTES], coins[SYMBYTES:]
    pk, sk_cpa = indcpa_keypair(d, params)
    sk = sk_cpa + pk + sha3_256(pk) + z
    return pk, sk


def kem_keypair(rng, params: KemParams) -> Tuple[bytes, bytes]:
    """Keypair drawing d and z with two separate randombytes(32) calls."""
    d = rng.randombytes(SYMBYTES)
    z = rng.randombytes(SYMBYTES)
    return kem_keygen(d + z, params)


def kem_enc_derand(pk: bytes, coins: bytes, params: KemParams) -> Tuple[bytes, bytes]:
    """Encapsulate with the raw randombytes buffer passed in as `coins`."""
    _check_len("public key", pk, params.pk_len)
    _check_len("coins", coins, params.coins_len)
    m = sha3_256(coins)
    kr = sha3_512(m + sha3_256(pk))
    ct = indcpa_enc(pk, m, kr[SYMBYTES:], params)
    ss = shake256(kr[:SYMBYTES] + sha3_256(ct), params.ss_len)
    return ct, ss


def kem_enc(pk: bytes, rng, params: KemParams) -> Tuple[bytes, bytes]:
    return kem_enc_derand(pk, rng.randombytes(params.coins_len), params)


def _select(fail: bool, on_fail: bytes, on_pass: bytes) -> bytes:
    mask = -int(fail) & 0xFF
    return bytes(p ^ (mask & (f ^ p)) for f, p in zip(on_fail, on_pass))


def kem_dec(sk: bytes, ct: bytes, params: KemParams) -> bytes:
    """Decapsulate; a re-encryption mismatch yields the implicit-rejection secret."""
    _check_len("secret key", sk, params.sk_len)
    _check_len("ciphertext", ct, params.ct_len)
    sk_cpa = sk[:params.polyvec_bytes]
    pk = sk[params.polyvec_bytes:params.polyvec_bytes + params.pk_len]
    h_pk = sk[-2 * SYMBYTES:-SYMBYTES]
    z = sk[-SYMBYTES:]

    m = indcpa_dec(sk_cpa, ct, params)
    kr = sha3_512(m + h_pk)
    cmp = indcpa_enc(pk, m, kr[SYMBYTES:], params)
    fail = not hmac.compare_digest(ct, cmp)
    key = _select(fail, z, kr[:SYMBYTES])
    return shake256(key + sha3_256(ct), params.ss_len)
