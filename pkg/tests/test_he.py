import random
from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from zkdpps.errors import CorruptCiphertext, LevelExceeded, RoundMismatch, ValueOutOfRange
from zkdpps.he import (
    DEFAULT_HE_PARAMS,
    WIDE_HE_PARAMS,
    Ciphertext,
    RingLweBackend,
    decode_fixed,
    decrypt,
    encode_fixed,
    encrypt,
    he_add,
    he_mul,
    he_scalar_mul,
    he_sub,
    keygen,
    negacyclic_mul,
)

T = DEFAULT_HE_PARAMS.plaintext_modulus


def naive_negacyclic(a, b):
    n = len(a)
    out = [0] * n
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            k = i + j
            if k < n:
                out[k] += x * y
            else:
                out[k - n] -= x * y
    return out


@pytest.fixture(scope="module")
def E(keys):
    cache = {}

    def enc(v, seed=0):
        if (v, seed) not in cache:
            cache[(v, seed)] = encrypt(keys.public_key, v, seed)
        return cache[(v, seed)]

    return enc


@pytest.fixture(scope="module")
def D(keys):
    return lambda c: decrypt(keys.secret_key, c).value


def test_round_trip(E, D):
    assert D(E(7)) == 7
    assert D(E(0)) == 0
    assert D(E(T - 1)) == T - 1


def test_out_of_range(keys):
    with pytest.raises(ValueOutOfRange):
        encrypt(keys.public_key, T, 0)
    with pytest.raises(ValueOutOfRange):
        encrypt(keys.public_key, -1, 0)


def test_probabilistic(E, D):
    a, b = E(7, 1), E(7, 2)
    assert a.to_bytes() != b.to_bytes()
    assert D(a) == D(b) == 7


def test_add(E, D):
    assert D(he_add(E(3), E(4))) == 7
    assert D(he_add(E(65530), E(10))) == (65530 + 10) % T == 3


def test_sub(E, D):
    assert D(he_sub(E(10), E(4))) == 6
    assert D(he_sub(E(4), E(10))) == (4 - 10) % T == 65531
    assert D(he_sub(E(9), E(9))) == 0


def test_mul(E, D):
    assert D(he_mul(E(6), E(7))) == 42
    assert D(he_mul(E(1), E(321))) == 321
    with pytest.raises(LevelExceeded):
        he_mul(he_mul(E(2), E(3)), E(4))


def test_scalar_mul(E, D):
    assert D(he_scalar_mul(E(5), 3)) == 15
    assert D(he_scalar_mul(E(8), 0)) == 0
    assert D(he_scalar_mul(E(1), 65536)) == 65536 == T - 1


def test_level_one_still_adds(E, D):
    prod = he_mul(E(6), E(7))
    assert D(he_add(prod, E(8))) == 50
    assert D(he_sub(E(8), prod)) == (8 - 42) % T
    assert D(he_scalar_mul(prod, 2)) == 84


def test_addition_chain(E, D):
    one = E(1)
    acc = E(0)
    for _ in range(1000):
        acc = he_add(acc, one)
    assert D(acc) == 1000


def test_round_mismatch(keys, other_keys, E):
    foreign = encrypt(other_keys.public_key, 1, 0)
    with pytest.raises(RoundMismatch):
        he_add(E(1), foreign)
    with pytest.raises(RoundMismatch):
        decrypt(keys.secret_key, foreign)


def test_serialization_round_trip(E, D):
    c = he_mul(E(3), E(5))
    back = Ciphertext.from_bytes(c.to_bytes(), DEFAULT_HE_PARAMS)
    assert back == c and D(back) == 15
    with pytest.raises(CorruptCiphertext):
        Ciphertext.from_bytes(c.to_bytes()[:-1], DEFAULT_HE_PARAMS)
    with pytest.raises(CorruptCiphertext):
        Ciphertext.from_bytes(c.to_bytes() + b"\x00", DEFAULT_HE_PARAMS)


def test_wrong_key_does_not_decrypt_silently(keys, E):
    stranger = keygen(DEFAULT_HE_PARAMS, random.Random(99), "round-t")
    with pytest.raises(CorruptCiphertext):
        decrypt(stranger.secret_key, E(7))


def test_backend_protocol(keys):
    be = RingLweBackend()
    c = be.add(be.encrypt(keys.public_key, 2, 0), be.encrypt(keys.public_key, 3, 1))
    assert be.decrypt(keys.secret_key, be.load(c.to_bytes())).value == 5


def test_fixed_point():
    m = WIDE_HE_PARAMS.plaintext_modulus
    a = encode_fixed(Decimal("20.00"), 100, m)
    b = encode_fixed(Decimal("-3.25"), 100, m)
    assert a.value == 2000 and b.value == m - 325
    assert decode_fixed(a.value * b.value, 100 * 100, m) == Fraction(-65, 1)
    with pytest.raises(ValueError):
        encode_fixed(Decimal("1.001"), 100, m)


def test_fixed_point_product_wide(D):
    kp = keygen(WIDE_HE_PARAMS, random.Random(1), "w")
    m = WIDE_HE_PARAMS.plaintext_modulus
    x = encode_fixed("20.00", 100, m)
    y = encode_fixed("22.00", 100, m)
    prod = he_mul(encrypt(kp.public_key, x, 0), encrypt(kp.public_key, y, 1))
    got = decode_fixed(decrypt(kp.secret_key, prod).value, 10**4, m)
    assert got == Fraction(440)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=8, max_size=8), st.lists(st.integers(-50, 50), min_size=8, max_size=8))
def test_negacyclic_matches_schoolbook(a, b):
    assert negacyclic_mul(a, b) == naive_negacyclic(a, b)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, T - 1), st.integers(0, T - 1))
def test_homomorphism_property(keys, a, b):
    pk, sk = keys.public_key, keys.secret_key
    ca, cb = encrypt(pk, a, a), encrypt(pk, b, b + 1)
    assert decrypt(sk, he_add(ca, cb)).value == (a + b) % T
    assert decrypt(sk, he_sub(ca, cb)).value == (a - b) % T
    assert decrypt(sk, he_mul(ca, cb)).value == a * b % T
