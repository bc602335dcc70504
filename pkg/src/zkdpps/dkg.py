"""Pedersen-style distributed key generation with Feldman verification.

Each validator deals a random degree ``t-1`` polynomial, publishes
``g^{a_k}`` for every coefficient, and privately hands ``f_i(j)`` to holder
``j``. Receivers check their share against the published commitments; a
dealer whose share fails re-verification on dispute is excluded, and the
remaining polynomials are summed into one round key.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .encoding import Writer, seeded_rng
from .errors import InsufficientDealers, InvalidReceiver
from .field import DEFAULT_GROUP, GroupParams, commit, poly_eval


@dataclass(frozen=True)
class DealerState:
    validator_id: int
    secret_poly: tuple[int, ...]
    commitments: tuple[int, ...]
    params: GroupParams = DEFAULT_GROUP
    n: int | None = None

    @property
    def threshold(self) -> int:
        return len(self.secret_poly)


@dataclass(frozen=True)
class DealtShare:
    sender: int
    receiver: int
    value: int


class DisputeVerdict(enum.Enum):
    DEALER_FAULTY = "DealerFaulty"
    SHARE_VALID = "ShareValid"


@dataclass(frozen=True)
class DkgTranscript:
    round_id: str
    params: GroupParams
    threshold: int
    commitments: Mapping[int, tuple[int, ...]]
    verified: frozenset[int]
    faulty: frozenset[int]
    public_key: int
    aggregate_commitments: tuple[int, ...]
    shares: Mapping[int, int] = field(repr=False)

    def public_bytes(self) -> bytes:
        """Canonical serialization without the private shares."""
        w = Writer().text(self.round_id).u32(self.threshold)
        w.bigint(self.public_key)
        w.u32(len(self.aggregate_commitments))
        for c in self.aggregate_commitments:
            w.bigint(c)
        w.u32(len(self.verified))
        for v in sorted(self.verified):
            w.u32(v)
        w.u32(len(self.faulty))
        for v in sorted(self.faulty):
            w.u32(v)
        return w.getvalue()


def dkg_init(
    validator_id: int,
    threshold_t: int,
    rng_seed: int,
    params: GroupParams = DEFAULT_GROUP,
    *,
    n: int | None = None,
    coefficients: Sequence[int] | None = None,
) -> DealerState:
    """Sample a dealer polynomial and its coefficient commitments.

    ``coefficients`` pins the polynomial for reproducible fixtures; otherwise the
    coefficients are drawn uniformly from ``[0, q)`` by a generator seeded
    with ``(rng_seed, validator_id)``.
    """
    if threshold_t < 1:
        raise ValueError("threshold must be at least 1")
    q = params.order_q
    if coefficients is None:
        rng = seeded_rng("dkg-poly", rng_seed, validator_id)
        coeffs = tuple(rng.randrange(q) for _ in range(threshold_t))
    else:
        if len(coefficients) != threshold_t:
            raise ValueError("coefficient count must equal the threshold")
        coeffs = tuple(c % q for c in coefficients)
    comms = tuple(commit(params, a) for a in coeffs)
    return DealerState(validator_id, coeffs, comms, params, n)


def dkg_deal(state: DealerState, receiver: int) -> DealtShare:
    if receiver < 1 or (state.n is not None and receiver > state.n):
        raise InvalidReceiver(f"receiver {receiver} outside 1..{state.n or 'n'}")
    if receiver % state.params.order_q == 0:
        raise InvalidReceiver("receiver index reduces to 0")
    value = poly_eval(state.secret_poly, receiver, state.params.order_q)
    return DealtShare(state.validator_id, receiver, value)


def feldman_check(params: GroupParams, index: int, value: int, commitments: Sequence[int]) -> bool:
    """``g^value == prod_k C_k^(index^k)`` in Z_P."""
    P, q = params.modulus_P, params.order_q
    lhs = pow(params.generator_g, value % q, P)
    rhs = 1
    power = 1
    for c in commitments:
        rhs = rhs * pow(c, power, P) % P
        power = power * index % q
    return lhs == rhs


def dkg_verify_share(
    share: DealtShare, commitments: Sequence[int], params: GroupParams = DEFAULT_GROUP
) -> bool:
    if not commitments:
        return False
    return feldman_check(params, share.receiver, share.value, commitments)


def dkg_dispute(
    share: DealtShare,
    commitments: Sequence[int],
    params: GroupParams = DEFAULT_GROUP,
    excluded: Iterable[int] = (),
) -> DisputeVerdict:
    """Resolve a flagged share by re-running the commitment check."""
    if share.sender in set(excluded):
        return DisputeVerdict.DEALER_FAULTY
    if dkg_verify_share(share, commitments, params):
        return DisputeVerdict.SHARE_VALID
    return DisputeVerdict.DEALER_FAULTY


def dkg_finalize(
    round_id: str,
    commitments: Mapping[int, Sequence[int]],
    shares: Iterable[DealtShare],
    n: int,
    params: GroupParams = DEFAULT_GROUP,
    excluded: Iterable[int] = (),
) -> DkgTranscript:
    """Aggregate every dealer whose shares all verify into one round key.

    A dealer is kept only if it dealt a verifying share to every holder
    ``1..n`` and was not excluded by a dispute. The round is valid only if
    strictly more than ``2n/3`` dealers survive.
    """
    q, P = params.order_q, params.modulus_P
    excluded = set(excluded)
    by_dealer: dict[int, dict[int, int]] = {d: {} for d in commitments}
    faulty = set(excluded)
    for s in shares:
        if s.sender not in by_dealer:
            continue
        if not dkg_verify_share(s, commitments[s.sender], params):
            faulty.add(s.sender)
        by_dealer[s.sender][s.receiver] = s.value
    holders = range(1, n + 1)
    for d, dealt in by_dealer.items():
        if any(j not in dealt for j in holders):
            faulty.add(d)
    verified = frozenset(d for d in commitments if d not in faulty)
    if 3 * len(verified) <= 2 * n:
        raise InsufficientDealers(
            f"{len(verified)} verified dealers of {n}; need more than 2n/3"
        )
    thresholds = {len(commitments[d]) for d in verified}
    if len(thresholds) != 1:
        raise ValueError("dealers disagree on the threshold")
    (t,) = thresholds
    agg_comms = []
    for k in range(t):
        acc = 1
        for d in sorted(verified):
            acc = acc * commitments[d][k] % P
        agg_comms.append(acc)
    agg_shares = {j: sum(by_dealer[d][j] for d in verified) % q for j in holders}
    return DkgTranscript(
        round_id=round_id,
        params=params,
        threshold=t,
        commitments={d: tuple(c) for d, c in commitments.items()},
        verified=verified,
        faulty=frozenset(faulty),
        public_key=agg_comms[0],
        aggregate_commitments=tuple(agg_comms),
        shares=agg_shares,
    )


@dataclass
class DkgRun:
    """Outcome of a full simulated dealing round among ``n`` validators."""

    transcript: DkgTranscript
    dealers: dict[int, DealerState]
    disputes: list[tuple[DealtShare, DisputeVerdict]]


def run_dkg(
    round_id: str,
    n: int,
    t: int,
    seed: int,
    params: GroupParams = DEFAULT_GROUP,
    cheaters: Mapping[int, Iterable[int]] | None = None,
) -> DkgRun:
    """Run one complete dealing round among validators ``1..n``.

    ``cheaters`` maps a dealer id to the receivers it sends a corrupted
    share to; those dealers end up excluded.
    """
    cheaters = {d: set(rs) for d, rs in (cheaters or {}).items()}
    dealers = {
        i: dkg_init(i, t, seed, params, n=n) for i in range(1, n + 1)
    }
    dealt: list[DealtShare] = []
    disputes: list[tuple[DealtShare, DisputeVerdict]] = []
    excluded: set[int] = set()
    for i, st in dealers.items():
        for j in range(1, n + 1):
            s = dkg_deal(st, j)
            if j in cheaters.get(i, ()):
                s = DealtShare(s.sender, s.receiver, (s.value + 1) % params.order_q)
            if not dkg_verify_share(s, st.commitments, params):
                verdict = dkg_dispute(s, st.commitments, params, excluded)
                disputes.append((s, verdict))
                if verdict is DisputeVerdict.DEALER_FAULTY:
                    excluded.add(i)
            dealt.append(s)
    commitments = {i: st.commitments for i, st in dealers.items()}
    transcript = dkg_finalize(round_id, commitments, dealt, n, params, excluded)
    return DkgRun(transcript, dealers, disputes)
