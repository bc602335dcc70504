"""Prime-field arithmetic and the Schnorr commitment group.

Field elements are plain Python ints reduced eagerly into ``[0, q)``.
Polynomials are sequences of coefficients, constant term first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DuplicateIndex, ZeroIndex


@dataclass(frozen=True)
class GroupParams:
    """Commitment group: ``g`` generates the order-``q`` subgroup of Z_P^*.

    None of the bundled parameter sets are cryptographically sized; they are
    chosen so that tests and simulations stay fast and reproducible.
    """

    modulus_P: int
    order_q: int
    generator_g: int

    def validate(self) -> None:
        from sympy import isprime

        P, q, g = self.modulus_P, self.order_q, self.generator_g
        if not isprime(q):
            raise ValueError(f"order_q={q} is not prime")
        if not isprime(P) or (P - 1) % q:
            raise ValueError(f"modulus_P={P} is not a prime with q | P-1")
        if not 2 <= g <= P - 1 or pow(g, q, P) != 1:
            raise ValueError(f"generator_g={g} does not have order q")


# 127-bit q, P = 2q + 1 (safe prime); 4 is a quadratic residue so it has order q.
DEFAULT_GROUP = GroupParams(
    modulus_P=170141183460469231731687303715884114527,
    order_q=85070591730234615865843651857942057263,
    generator_g=4,
)

# Toy group small enough to check DKG arithmetic by hand.
TINY_GROUP = GroupParams(modulus_P=23, order_q=11, generator_g=2)

# Field of order 257 embedded in Z_1543^*, 1543 = 6*257 + 1; handy for hand-checked sharing.
GROUP_257 = GroupParams(modulus_P=1543, order_q=257, generator_g=64)


def poly_eval(coefficients: Sequence[int], x: int, q: int) -> int:
    """Horner evaluation of ``sum(c_k x^k)`` mod ``q``."""
    acc = 0
    for c in reversed(coefficients):
        acc = (acc * x + c) % q
    return acc


def _check_indices(indices: Iterable[int], q: int) -> list[int]:
    idx = list(indices)
    if len(set(idx)) != len(idx):
        raise DuplicateIndex(f"share indices collide: {sorted(idx)}")
    for j in idx:
        if j % q == 0:
            raise ZeroIndex("share index 0 would reveal the secret")
    if len({j % q for j in idx}) != len(idx):
        raise DuplicateIndex("share indices collide modulo q")
    return idx


def lagrange_coeff(index_set: Iterable[int], i: int, q: int) -> int:
    """Weight of share ``i`` when interpolating at zero over ``index_set``."""
    T = _check_indices(index_set, q)
    if i not in T:
        raise ValueError(f"index {i} not in {T}")
    num, den = 1, 1
    for j in T:
        if j == i:
            continue
        num = num * j % q
        den = den * (j - i) % q
    return num * pow(den, -1, q) % q


def interpolate_at_zero(shares: Sequence[tuple[int, int]], q: int) -> int:
    if not shares:
        raise ValueError("need at least one share")
    T = _check_indices([i for i, _ in shares], q)
    return sum(lagrange_coeff(T, i, q) * v for i, v in shares) % q


def group_exp(params: GroupParams, base: int, exponent: int) -> int:
    return pow(base, exponent, params.modulus_P)


def commit(params: GroupParams, value: int) -> int:
    return group_exp(params, params.generator_g, value)
