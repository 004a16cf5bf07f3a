import numpy as np
import pytest

from config import DEFAULT_KAT_ENTROPY
from errors import InvalidArgumentError, MalformedInputError
from services import dilithium
from services.drbg import NistRandom

ALL_PARAMS = [dilithium.DILITHIUM2, dilithium.DILITHIUM3, dilithium.DILITHIUM5]
Q = dilithium.Q


def negacyclic_product(a, b):
    full = np.convolve(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
    res = full[:256].copy()
    res[:255] -= full[256:]
    return res % Q


@pytest.fixture
def rng():
    return np.random.default_rng(99)


@pytest.mark.parametrize("params,sizes", [
    (dilithium.DILITHIUM2, (1312, 2528, 2420)),
    (dilithium.DILITHIUM3, (1952, 4000, 3293)),
    (dilithium.DILITHIUM5, (2592, 4864, 4595)),
])
def test_parameter_sizes(params, sizes):
    assert (params.pk_len, params.sk_len, params.sig_len) == sizes


def test_ntt_roundtrip(rng):
    polys = rng.integers(0, Q, size=(50, 256))
    assert np.array_equal(dilithium.inv_ntt(dilithium.ntt(polys)), polys)


@pytest.mark.slow
def test_ntt_roundtrip_many(rng):
    polys = rng.integers(0, Q, size=(1000, 256))
    assert np.array_equal(dilithium.inv_ntt(dilithium.ntt(polys)), polys)


def test_pointwise_product_matches_schoolbook(rng):
    for _ in range(5):
        a = rng.integers(0, Q, size=256)
        b = rng.integers(-(1 << 17), 1 << 17, size=256) % Q
        product = dilithium.inv_ntt(dilithium.pointwise(dilithium.ntt(a), dilithium.ntt(b)))
        assert np.array_equal(product, negacyclic_product(a, b))


def test_power2round(rng):
    r = rng.integers(0, Q, size=4096)
    r1, r0 = dilithium.power2round(r)
    assert np.array_equal((r1 * (1 << dilithium.D) + r0) % Q, r)
    assert r0.min() > -(1 << 12) and r0.max() <= (1 << 12)
    assert dilithium.power2round(0) == (0, 0)


@pytest.mark.parametrize("gamma2", [(Q - 1) // 88, (Q - 1) // 32])
def test_decompose(rng, gamma2):
    r = np.concatenate((rng.integers(0, Q, size=4096), [0, Q - 1, gamma2, gamma2 + 1, Q - 1 - gamma2]))
    r1, r0 = dilithium.decompose(r, gamma2)
    assert np.array_equal((r1 * 2 * gamma2 + r0) % Q, r)
    assert np.abs(r0).max() <= gamma2
    assert r1.min() >= 0 and r1.max() < (Q - 1) // (2 * gamma2)
    assert dilithium.decompose(Q - 1, gamma2) == (0, -1)


@pytest.mark.parametrize("gamma2", [(Q - 1) // 88, (Q - 1) // 32])
def test_hint_recovers_high_bits(rng, gamma2):
    r = rng.integers(0, Q, size=20000)
    z = rng.integers(-gamma2, gamma2 + 1, size=20000)
    h = dilithium.make_hint(z, r, gamma2)
    recovered = dilithium.use_hint(h, r, gamma2)
    assert np.array_equal(recovered, dilithium.high_bits((r + z) % Q, gamma2))


def test_sample_in_ball_weight():
    for params in ALL_PARAMS:
        c = dilithium.sample_in_ball(bytes(range(32)), params.tau)
        nonzero = c[c != 0]
        assert nonzero.size == params.tau
        assert set(nonzero.tolist()) <= {1, Q - 1}


def test_uniform_samplers_ranges():
    params = dilithium.DILITHIUM3
    s = dilithium.uniform_eta(bytes(64), 0, params.eta)
    assert np.abs(s).max() <= params.eta
    y = dilithium.uniform_gamma1(bytes(64), 0, params)
    assert y.min() > -params.gamma1 and y.max() <= params.gamma1


def test_expand_matrix_shape():
    a = dilithium.expand_matrix(bytes(32), 4, 4)
    assert a.shape == (4, 4, 256)
    assert a.min() >= 0 and a.max() < Q


def test_hint_packing():
    params = dilithium.DILITHIUM2
    h = np.zeros((params.k, 256), dtype=np.int64)
    h[0, [3, 17]] = 1
    h[2, 255] = 1
    packed = dilithium.pack_hint(h, params)
    assert len(packed) == params.omega + params.k
    assert np.array_equal(dilithium.unpack_hint(packed, params), h)

    unordered = bytearray(packed)
    unordered[0], unordered[1] = unordered[1], unordered[0]
    assert dilithium.unpack_hint(bytes(unordered), params) is None

    dirty = bytearray(packed)
    dirty[params.omega - 1] = 5
    assert dilithium.unpack_hint(bytes(dirty), params) is None


def _roundtrips(params, trials):
    rng = NistRandom(DEFAULT_KAT_ENTROPY)
    for i in range(trials):
        pk, sk = dilithium.keygen_from_rng(rng, params)
        msg = rng.randombytes(33 * (i + 1))
        sm, attempts = dilithium.sign_with_stats(sk, msg, params)
        assert attempts >= 1
        assert len(sm) == params.sig_len + len(msg)
        assert dilithium.verify(pk, sm, params) == msg


@pytest.mark.parametrize("params", ALL_PARAMS, ids=lambda p: p.name)
def test_sign_roundtrip(params):
    _roundtrips(params, 3)


@pytest.mark.slow
@pytest.mark.parametrize("params", ALL_PARAMS, ids=lambda p: p.name)
def test_sign_roundtrip_many(params):
    _roundtrips(params, 200)


def test_signing_is_deterministic():
    params = dilithium.DILITHIUM2
    pk, sk = dilithium.keygen(bytes(32), params)
    assert dilithium.sign(sk, b"hello", params) == dilithium.sign(sk, b"hello", params)
    assert dilithium.keygen(bytes(32), params) == (pk, sk)


@pytest.mark.parametrize("params", ALL_PARAMS, ids=lambda p: p.name)
def test_mutated_signatures_are_rejected(params):
    pk, sk = dilithium.keygen(bytes([1]) * 32, params)
    msg = b"processing element"
    sm = dilithium.sign(sk, msg, params)
    hint_start = 32 + params.l * params.polyz_bytes
    for position in (0, 31, 32, hint_start - 1, params.sig_len + 3):
        mutated = bytearray(sm)
        mutated[position] ^= 0x01
        assert dilithium.verify(pk, bytes(mutated), params) is None


def test_verify_input_errors():
    params = dilithium.DILITHIUM2
    pk, sk = dilithium.keygen(bytes(32), params)
    sm = dilithium.sign(sk, b"", params)
    assert dilithium.verify(pk, sm, params) == b""
    with pytest.raises(MalformedInputError):
        dilithium.verify(pk, sm[:params.sig_len - 1], params)
    with pytest.raises(InvalidArgumentError):
        dilithium.verify(pk[:-1], sm, params)
    with pytest.raises(InvalidArgumentError):
        dilithium.sign(sk[:-1], b"", params)


@pytest.mark.parametrize("eta", [2, 4])
def test_uniform_eta_frequencies(eta):
    samples = np.concatenate([dilithium.uniform_eta(bytes(64), nonce, eta) for nonce in range(200)])
    n = samples.size
    p = 1 / (2 * eta + 1)
    for k in range(-eta, eta + 1):
        count = int(np.count_nonzero(samples == k))
        assert abs(count - n * p) <= 5 * np.sqrt(n * p * (1 - p)), f"value {k}: {count} of {n}"
