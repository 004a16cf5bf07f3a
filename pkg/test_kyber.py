from math import comb, sqrt

import numpy as np
import pytest

from config import DEFAULT_KAT_ENTROPY, EXPANSION_CACHE_SIZE
from errors import InvalidArgumentError
from services import kyber
from services.drbg import NistRandom
from services.keccak import sha3_256, shake256
from utils.bitpack import pack_bits, unpack_bits
from utils.cache import clear_expansion_caches

ALL_PARAMS = [kyber.KYBER512, kyber.KYBER768, kyber.KYBER1024]


def negacyclic_product(a, b, q):
    full = np.convolve(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
    res = full[:256].copy()
    res[:255] -= full[256:]
    return res % q


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.mark.parametrize("params,sizes", [
    (kyber.KYBER512, (800, 1632, 768)),
    (kyber.KYBER768, (1184, 2400, 1088)),
    (kyber.KYBER1024, (1568, 3168, 1568)),
])
def test_parameter_sizes(params, sizes):
    assert (params.pk_len, params.sk_len, params.ct_len) == sizes


def test_ntt_roundtrip(rng):
    polys = rng.integers(0, kyber.Q, size=(50, 256))
    assert np.array_equal(kyber.inv_ntt(kyber.ntt(polys)), polys)


@pytest.mark.slow
def test_ntt_roundtrip_many(rng):
    polys = rng.integers(0, kyber.Q, size=(1000, 256))
    assert np.array_equal(kyber.inv_ntt(kyber.ntt(polys)), polys)


def test_ntt_multiplication_matches_schoolbook(rng):
    for _ in range(10):
        a = rng.integers(0, kyber.Q, size=256)
        b = rng.integers(0, kyber.Q, size=256)
        product = kyber.inv_ntt(kyber.basemul(kyber.ntt(a), kyber.ntt(b)))
        assert np.array_equal(product, negacyclic_product(a, b, kyber.Q))


@pytest.mark.parametrize("d,bound", [(4, 104), (5, 52), (10, 2), (11, 1)])
def test_compress_error_bound_exhaustive(d, bound):
    x = np.arange(kyber.Q)
    y = kyber.compress(x, d)
    assert y.min() >= 0 and y.max() < (1 << d)
    diff = (kyber.decompress(y, d) - x) % kyber.Q
    err = np.minimum(diff, kyber.Q - diff)
    assert err.max() <= bound


def test_compress_scalar():
    assert int(kyber.compress(0, 1)) == 0
    assert int(kyber.compress(kyber.Q // 2, 1)) == 1


def test_bitpack_roundtrip_and_range():
    values = np.arange(256) % 1024
    assert np.array_equal(unpack_bits(pack_bits(values, 10), 10), values)
    with pytest.raises(ValueError):
        pack_bits([1024], 10)


def test_poly_codecs(rng):
    p = rng.integers(0, kyber.Q, size=256)
    data = kyber.poly_tobytes(p)
    assert len(data) == kyber.POLYBYTES
    assert np.array_equal(kyber.poly_frombytes(data), p)
    msg = bytes(range(32))
    assert kyber.poly_tomsg(kyber.poly_frommsg(msg)) == msg


def test_cbd_range_and_length_check():
    for eta in (2, 3):
        coeffs = kyber.cbd(eta, bytes(range(64 * eta)))
        centered = np.where(coeffs > kyber.Q // 2, coeffs - kyber.Q, coeffs)
        assert np.abs(centered).max() <= eta
    with pytest.raises(InvalidArgumentError):
        kyber.cbd(2, bytes(10))
    with pytest.raises(InvalidArgumentError):
        kyber.cbd(4, bytes(256))


def test_gen_matrix_is_deterministic_and_transposed():
    rho = bytes(range(32))
    a = np.array(kyber.gen_matrix(rho, False, 2))
    at = np.array(kyber.gen_matrix(rho, True, 2))
    assert a.shape == (2, 2, 256)
    assert np.array_equal(a, at.transpose(1, 0, 2))
    assert a.max() < kyber.Q


def test_indcpa_roundtrip():
    params = kyber.KYBER768
    pk, sk = kyber.indcpa_keypair(bytes(32), params)
    msg = bytes(range(32))
    ct = kyber.indcpa_enc(pk, msg, bytes([7]) * 32, params)
    assert kyber.indcpa_dec(sk, ct, params) == msg


def _roundtrips(params, trials):
    rng = NistRandom(DEFAULT_KAT_ENTROPY)
    for _ in range(trials):
        pk, sk = kyber.kem_keypair(rng, params)
        ct, ss = kyber.kem_enc(pk, rng, params)
        assert len(pk) == params.pk_len and len(sk) == params.sk_len and len(ct) == params.ct_len
        assert kyber.kem_dec(sk, ct, params) == ss


@pytest.mark.parametrize("params", ALL_PARAMS, ids=lambda p: p.name)
def test_kem_roundtrip(params):
    _roundtrips(params, 5)


@pytest.mark.slow
@pytest.mark.parametrize("params", ALL_PARAMS, ids=lambda p: p.name)
def test_kem_roundtrip_many(params):
    _roundtrips(params, 200)


@pytest.mark.parametrize("params", ALL_PARAMS, ids=lambda p: p.name)
def test_implicit_rejection(params):
    rng = NistRandom(DEFAULT_KAT_ENTROPY)
    pk, sk = kyber.kem_keypair(rng, params)
    ct, ss = kyber.kem_enc(pk, rng, params)
    z = sk[-32:]
    for position in (0, len(ct) // 2, len(ct) - 1):
        mutated = bytearray(ct)
        mutated[position] ^= 0x01
        mutated = bytes(mutated)
        rejected = kyber.kem_dec(sk, mutated, params)
        assert rejected != ss
        assert rejected == shake256(z + sha3_256(mutated), 32)


def test_keygen_is_deterministic():
    coins = bytes(range(64))
    assert kyber.kem_keygen(coins, kyber.KYBER512) == kyber.kem_keygen(coins, kyber.KYBER512)
    rng = NistRandom(DEFAULT_KAT_ENTROPY)
    d, z = rng.randombytes(32), rng.randombytes(32)
    assert kyber.kem_keypair(NistRandom(DEFAULT_KAT_ENTROPY), kyber.KYBER512) == kyber.kem_keygen(d + z, kyber.KYBER512)


def test_length_checks():
    params = kyber.KYBER512
    pk, sk = kyber.kem_keygen(bytes(64), params)
    with pytest.raises(InvalidArgumentError):
        kyber.kem_enc_derand(pk[:-1], bytes(32), params)
    with pytest.raises(InvalidArgumentError):
        kyber.kem_enc_derand(pk, bytes(31), params)
    with pytest.raises(InvalidArgumentError):
        kyber.kem_dec(sk, bytes(params.ct_len - 1), params)
    with pytest.raises(InvalidArgumentError):
        kyber.kem_keygen(bytes(32), params)


@pytest.mark.skipif(EXPANSION_CACHE_SIZE <= 0, reason="expansion cache disabled")
def test_matrix_expansion_is_cached_until_cleared():
    rho = bytes([9]) * 32
    first = kyber.gen_matrix(rho, False, 3)
    assert kyber.gen_matrix(rho, False, 3) is first
    assert not first.flags.writeable
    clear_expansion_caches()
    again = kyber.gen_matrix(rho, False, 3)
    assert again is not first
    assert np.array_equal(again, first)


def _cbd_bit_count(eta, buf):
    bits = [(buf[j // 8] >> (j % 8)) & 1 for j in range(8 * len(buf))]
    coeffs = []
    for i in range(256):
        chunk = bits[2 * eta * i:2 * eta * (i + 1)]
        coeffs.append(sum(chunk[:eta]) - sum(chunk[eta:]))
    return coeffs


@pytest.mark.parametrize("eta", [2, 3])
def test_cbd_matches_bit_count(eta):
    buf = kyber.prf(bytes(range(32)), eta, 64 * eta)
    expected = np.array(_cbd_bit_count(eta, buf)) % kyber.Q
    assert np.array_equal(kyber.cbd(eta, buf), expected)


@pytest.mark.parametrize("eta", [2, 3])
def test_cbd_frequencies_follow_binomial(eta):
    samples = np.concatenate([kyber.cbd(eta, kyber.prf(bytes([seed]) * 32, nonce, 64 * eta))
                              for seed in range(2) for nonce in range(100)])
    centered = np.where(samples > kyber.Q // 2, samples - kyber.Q, samples)
    n = centered.size
    for k in range(-eta, eta + 1):
        p = comb(2 * eta, eta + k) / 4 ** eta
        count = int(np.count_nonzero(centered == k))
        assert abs(count - n * p) <= 5 * sqrt(n * p * (1 - p)), f"value {k}: {count} of {n}"
    assert abs(centered.mean()) <= 5 * sqrt(eta / 2 / n)
