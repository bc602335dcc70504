"""Exact leveled homomorphic encryption over Z_q[x]/(x^n + 1).

A BFV-style scheme with one multiplicative level and no relinearization:
products are kept as three-component ciphertexts and decrypted directly
with ``s^2``. Plaintexts are single integers placed in the constant
coefficient; every other coefficient must decrypt to zero, which is how
noise overflow is detected.

The parameters are toy-sized and offer no security. All evaluation
operators are randomness-free so replicated computers agree bit for bit.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from fractions import Fraction
from decimal import Decimal
from functools import cached_property, lru_cache
from typing import Protocol, Sequence

from . import taint
from .encoding import Reader, Writer, seeded_rng
from .errors import CorruptCiphertext, LevelExceeded, RoundMismatch, ValueOutOfRange
from .taint import Origin

try:
    from gmpy2 import mpz as _bigint
except ImportError:  # pragma: no cover
    _bigint = int

Poly = tuple[int, ...]


@dataclass(frozen=True)
class HEParams:
    ring_dimension: int = 1024
    plaintext_modulus: int = 65537
    ciphertext_modulus: int = 2**61 - 1
    error_bound: int = 2

    def __post_init__(self) -> None:
        n = self.ring_dimension
        if n < 2 or n & (n - 1):
            raise ValueError("ring_dimension must be a power of two")
        if self.plaintext_modulus < 2:
            raise ValueError("plaintext_modulus must be at least 2")
        if self.ciphertext_modulus < self.plaintext_modulus << 20:
            raise ValueError("ciphertext_modulus must dwarf plaintext_modulus")

    @property
    def delta(self) -> int:
        return self.ciphertext_modulus // self.plaintext_modulus

    @property
    def coeff_bytes(self) -> int:
        return (self.ciphertext_modulus.bit_length() + 7) // 8


DEFAULT_HE_PARAMS = HEParams()

# Headroom for fixed-point products: scale-100 readings multiply to scale 10^4.
WIDE_HE_PARAMS = HEParams(plaintext_modulus=1073741827, ciphertext_modulus=2**127 - 1)


class Encoding(enum.Enum):
    INTEGER = "Integer"
    FIXED_POINT = "FixedPoint"


@dataclass(frozen=True)
class Plaintext:
    value: int
    encoding: Encoding = Encoding.INTEGER
    scale: int = 1
    taint: Origin = Origin.PUBLISHER_LOCAL

    def centered(self, modulus: int) -> int:
        v = self.value % modulus
        return v - modulus if v > modulus // 2 else v


def encode_fixed(x: Decimal | int | str, scale: int, modulus: int) -> Plaintext:
    if scale < 1 or 10 ** (len(str(scale)) - 1) != scale:
        raise ValueError("fixed-point scale must be a power of ten")
    scaled = Decimal(str(x)) * scale
    if scaled != scaled.to_integral_value():
        raise ValueError(f"{x} is not representable at scale {scale}")
    return Plaintext(int(scaled) % modulus, Encoding.FIXED_POINT, scale)


def decode_fixed(value: int, scale: int, modulus: int) -> Fraction:
    v = value % modulus
    if v > modulus // 2:
        v -= modulus
    return Fraction(v, scale)


# ---------------------------------------------------------------------------
# ring arithmetic


@lru_cache(maxsize=64)
def _bias_const(slots: int, width: int) -> int:
    bias = 1 << (8 * width - 1)
    return int.from_bytes(bias.to_bytes(width, "little") * slots, "little")


def _pack(coeffs: Sequence[int], width: int) -> int:
    bias = 1 << (8 * width - 1)
    raw = b"".join((c + bias).to_bytes(width, "little") for c in coeffs)
    return int.from_bytes(raw, "little") - _bias_const(len(coeffs), width)


def _unpack(value: int, slots: int, width: int) -> list[int]:
    bias = 1 << (8 * width - 1)
    raw = (value + _bias_const(slots, width)).to_bytes(slots * width, "little")
    mv = memoryview(raw)
    return [
        int.from_bytes(mv[i * width : (i + 1) * width], "little") - bias
        for i in range(slots)
    ]


def negacyclic_mul(a: Sequence[int], b: Sequence[int]) -> list[int]:
    """Exact product in Z[x]/(x^n + 1) of two signed coefficient vectors.

    Uses Kronecker substitution: both operands are packed into one big
    integer each, multiplied once, and unpacked.
    """
    n = len(a)
    bound = n * max(map(abs, a), default=0) * max(map(abs, b), default=0)
    width = (bound.bit_length() + 2 + 7) // 8 or 1
    prod = _unpack(int(_bigint(_pack(a, width)) * _bigint(_pack(b, width))), 2 * n, width)
    return [prod[i] - prod[i + n] for i in range(n)]


def _center(p: Sequence[int], q: int) -> list[int]:
    half = q // 2
    return [c - q if c > half else c for c in p]


def _mulmod(a: Sequence[int], b: Sequence[int], q: int) -> Poly:
    return tuple(c % q for c in negacyclic_mul(_center(a, q), _center(b, q)))


def _addmod(a: Sequence[int], b: Sequence[int], q: int) -> Poly:
    return tuple((x + y) % q for x, y in zip(a, b))


def _submod(a: Sequence[int], b: Sequence[int], q: int) -> Poly:
    return tuple((x - y) % q for x, y in zip(a, b))


def _small(rng: random.Random, n: int, bound: int) -> list[int]:
    """Coefficients in ``[-bound, bound]`` (the slight modulo bias is irrelevant here)."""
    width = 2 * bound + 1
    return [b % width - bound for b in rng.randbytes(n)]


def _ternary(rng: random.Random, n: int) -> list[int]:
    return _small(rng, n, 1)


def _error(rng: random.Random, n: int, bound: int) -> list[int]:
    return _small(rng, n, bound)


# ---------------------------------------------------------------------------
# keys and ciphertexts


@dataclass(frozen=True)
class PublicKey:
    b: Poly = field(repr=False)
    a: Poly = field(repr=False)
    round_id: str
    params: HEParams

    def to_bytes(self) -> bytes:
        w = Writer().text(self.round_id).u32(self.params.ring_dimension)
        width = self.params.coeff_bytes
        for p in (self.b, self.a):
            w.u32(len(p)).raw(b"".join(c.to_bytes(width, "little") for c in p))
        return w.getvalue()


@dataclass(frozen=True)
class SecretKey:
    s: Poly = field(repr=False)
    round_id: str
    params: HEParams

    @cached_property
    def s_squared(self) -> list[int]:
        return negacyclic_mul(self.s, self.s)


@dataclass(frozen=True)
class HEKeyPair:
    secret_key: SecretKey
    public_key: PublicKey
    round_id: str


def keygen(params: HEParams, rng: random.Random, round_id: str) -> HEKeyPair:
    n, q = params.ring_dimension, params.ciphertext_modulus
    s = _ternary(rng, n)
    a = [rng.randrange(q) for _ in range(n)]
    e = _error(rng, n, params.error_bound)
    a_s = negacyclic_mul(_center(a, q), s)
    b = tuple((-(x + y)) % q for x, y in zip(a_s, e))
    sk = SecretKey(tuple(s), round_id, params)
    pk = PublicKey(b, tuple(a), round_id, params)
    return HEKeyPair(sk, pk, round_id)


@dataclass(frozen=True)
class Ciphertext:
    components: tuple[Poly, ...] = field(repr=False)
    level: int
    round_id: str
    params: HEParams = field(repr=False)

    @property
    def degree(self) -> int:
        return len(self.components) - 1

    def to_bytes(self) -> bytes:
        """Header (round, degree, level, coefficient width) then u32-prefixed arrays."""
        width = self.params.coeff_bytes
        w = Writer().text(self.round_id).u8(self.degree).u8(self.level).u8(width)
        for comp in self.components:
            w.u32(len(comp)).raw(b"".join(c.to_bytes(width, "little") for c in comp))
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes, params: HEParams) -> "Ciphertext":
        try:
            return cls._parse(data, params)
        except ValueError as exc:  # truncated or undecodable fields
            raise CorruptCiphertext(str(exc)) from exc

    @classmethod
    def _parse(cls, data: bytes, params: HEParams) -> "Ciphertext":
        r = Reader(data)
        round_id = r.text()
        degree, level, width = r.u8(), r.u8(), r.u8()
        if degree not in (1, 2) or level != degree - 1 or width != params.coeff_bytes:
            raise CorruptCiphertext("bad ciphertext header")
        comps = []
        for _ in range(degree + 1):
            count = r.u32()
            if count != params.ring_dimension:
                raise CorruptCiphertext("component length does not match ring dimension")
            raw = r.raw(count * width)
            comp = tuple(
                int.from_bytes(raw[i * width : (i + 1) * width], "little") for i in range(count)
            )
            if any(c >= params.ciphertext_modulus for c in comp):
                raise CorruptCiphertext("coefficient outside Z_q")
            comps.append(comp)
        if not r.at_end():
            raise CorruptCiphertext("trailing bytes")
        return cls(tuple(comps), level, round_id, params)


def encrypt(pk: PublicKey, pt: Plaintext | int, rng_seed: int) -> Ciphertext:
    params = pk.params
    value = pt.value if isinstance(pt, Plaintext) else pt
    if not 0 <= value < params.plaintext_modulus:
        raise ValueOutOfRange(f"{value} not in [0, {params.plaintext_modulus})")
    n, q = params.ring_dimension, params.ciphertext_modulus
    rng = seeded_rng("he-encrypt", pk.round_id, rng_seed)
    u = _ternary(rng, n)
    e1 = _error(rng, n, params.error_bound)
    e2 = _error(rng, n, params.error_bound)
    bu = negacyclic_mul(_center(pk.b, q), u)
    au = negacyclic_mul(_center(pk.a, q), u)
    c0 = [(x + y) % q for x, y in zip(bu, e1)]
    c0[0] = (c0[0] + params.delta * value) % q
    c1 = tuple((x + y) % q for x, y in zip(au, e2))
    return Ciphertext((tuple(c0), c1), 0, pk.round_id, params)


def decrypt(sk: SecretKey, c: Ciphertext, *, scale: int = 1) -> Plaintext:
    taint.guard_decrypt()
    if sk.round_id != c.round_id:
        raise RoundMismatch(f"key round {sk.round_id} vs ciphertext round {c.round_id}")
    params = c.params
    q, t = params.ciphertext_modulus, params.plaintext_modulus
    acc = list(c.components[0])
    terms = [sk.s]
    if c.degree == 2:
        terms.append(sk.s_squared)
    for comp, key_part in zip(c.components[1:], terms):
        prod = negacyclic_mul(_center(comp, q), key_part)
        acc = [x + y for x, y in zip(acc, prod)]
    decoded = [((2 * t * x + q) // (2 * q)) % t for x in _center([x % q for x in acc], q)]
    if any(decoded[1:]):
        raise CorruptCiphertext("noise budget exceeded: reserved slots are non-zero")
    encoding = Encoding.FIXED_POINT if scale != 1 else Encoding.INTEGER
    return Plaintext(decoded[0], encoding, scale, Origin.QUORUM_DECRYPTED)


def _check_pair(a: Ciphertext, b: Ciphertext) -> None:
    if a.round_id != b.round_id:
        raise RoundMismatch(f"operands from rounds {a.round_id} and {b.round_id}")
    if a.params != b.params:
        raise RoundMismatch("operands use different parameter sets")


def _linear(a: Ciphertext, b: Ciphertext, sign: int) -> Ciphertext:
    _check_pair(a, b)
    q = a.params.ciphertext_modulus
    level = max(a.level, b.level)
    if level > 1:
        raise LevelExceeded("combined level above 1")
    zero = (0,) * a.params.ring_dimension
    size = max(len(a.components), len(b.components))
    ca = a.components + (zero,) * (size - len(a.components))
    cb = b.components + (zero,) * (size - len(b.components))
    op = _addmod if sign > 0 else _submod
    comps = tuple(op(x, y, q) for x, y in zip(ca, cb))
    return Ciphertext(comps, level, a.round_id, a.params)


def he_add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    return _linear(a, b, +1)


def he_sub(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    return _linear(a, b, -1)


def he_mul(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Tensor product rescaled by ``t/q``; yields a level-1, degree-2 ciphertext."""
    _check_pair(a, b)
    if a.level or b.level:
        raise LevelExceeded("only one multiplicative level is available")
    params = a.params
    q, t = params.ciphertext_modulus, params.plaintext_modulus
    a0, a1 = (_center(p, q) for p in a.components)
    b0, b1 = (_center(p, q) for p in b.components)
    d0 = negacyclic_mul(a0, b0)
    d2 = negacyclic_mul(a1, b1)
    # Karatsuba: a0*b1 + a1*b0 = (a0 + a1)(b0 + b1) - d0 - d2
    cross = negacyclic_mul([x + y for x, y in zip(a0, a1)], [x + y for x, y in zip(b0, b1)])
    d1 = [c - x - y for c, x, y in zip(cross, d0, d2)]

    def rescale(d: list[int]) -> Poly:
        return tuple(((2 * t * x + q) // (2 * q)) % q for x in d)

    return Ciphertext((rescale(d0), rescale(d1), rescale(d2)), 1, a.round_id, params)


def he_scalar_mul(a: Ciphertext, k: Plaintext | int) -> Ciphertext:
    params = a.params
    value = k.value if isinstance(k, Plaintext) else k
    if not 0 <= value < params.plaintext_modulus:
        raise ValueOutOfRange(f"scalar {value} not in [0, {params.plaintext_modulus})")
    q = params.ciphertext_modulus
    # Multiply by the centered representative so that -1 costs no noise.
    t = params.plaintext_modulus
    k_c = value - t if value > t // 2 else value
    comps = tuple(tuple(c * k_c % q for c in comp) for comp in a.components)
    return Ciphertext(comps, a.level, a.round_id, params)


class HEBackend(Protocol):
    """What the rest of the system needs from a homomorphic scheme."""

    params: HEParams

    def keygen(self, rng: random.Random, round_id: str) -> HEKeyPair: ...
    def encrypt(self, pk: PublicKey, pt: Plaintext | int, rng_seed: int) -> Ciphertext: ...
    def decrypt(self, sk: SecretKey, c: Ciphertext) -> Plaintext: ...
    def add(self, a: Ciphertext, b: Ciphertext) -> Ciphertext: ...
    def sub(self, a: Ciphertext, b: Ciphertext) -> Ciphertext: ...
    def mul(self, a: Ciphertext, b: Ciphertext) -> Ciphertext: ...
    def scalar_mul(self, a: Ciphertext, k: Plaintext | int) -> Ciphertext: ...
    def load(self, data: bytes) -> Ciphertext: ...


@dataclass(frozen=True)
class RingLweBackend:
    params: HEParams = DEFAULT_HE_PARAMS

    def keygen(self, rng: random.Random, round_id: str) -> HEKeyPair:
        return keygen(self.params, rng, round_id)

    def encrypt(self, pk: PublicKey, pt: Plaintext | int, rng_seed: int) -> Ciphertext:
        return encrypt(pk, pt, rng_seed)

    def decrypt(self, sk: SecretKey, c: Ciphertext) -> Plaintext:
        return decrypt(sk, c)

    add = staticmethod(he_add)
    sub = staticmethod(he_sub)
    mul = staticmethod(he_mul)
    scalar_mul = staticmethod(he_scalar_mul)

    def load(self, data: bytes) -> Ciphertext:
        return Ciphertext.from_bytes(data, self.params)
