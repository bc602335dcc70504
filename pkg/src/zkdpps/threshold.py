"""Shamir sharing and reconstruction, plus the key-round lifecycle.

The DKG produces a master secret in Z_q that nobody holds in full. The
homomorphic scheme needs lattice keys, so each round runs a short key
ceremony: a threshold of aggregated shares is combined once and the HE key
pair is expanded deterministically from ``(master, round_id)``. Only the
public half survives the ceremony. Decryption later
repeats the reconstruction inside the selected quorum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .dkg import DkgTranscript, feldman_check
from .encoding import Writer, seeded_rng
from .errors import ExpiredRound, InsufficientShares, MixedRounds
from .field import DEFAULT_GROUP, GroupParams, commit, interpolate_at_zero, poly_eval
from .he import DEFAULT_HE_PARAMS, HEKeyPair, HEParams, PublicKey, keygen

DEFAULT_REFRESH_MS = 300_000


@dataclass(frozen=True)
class ThresholdConfig:
    n: int = 5
    t: int = 3
    refresh_period_ms: int = DEFAULT_REFRESH_MS

    def __post_init__(self) -> None:
        if not 1 <= self.t <= self.n:
            raise ValueError(f"need 1 <= t <= n, got t={self.t}, n={self.n}")
        if self.refresh_period_ms <= 0:
            raise ValueError("refresh period must be positive")


@dataclass(frozen=True)
class KeyShare:
    holder_id: str
    index: int
    value: int = field(repr=False)
    round_id: str = ""


def split_secret(
    secret: int,
    cfg: ThresholdConfig,
    rng_seed: int,
    params: GroupParams = DEFAULT_GROUP,
    *,
    round_id: str = "",
    holders: Sequence[str] | None = None,
    coefficients: Sequence[int] | None = None,
) -> tuple[list[KeyShare], tuple[int, ...]]:
    """Deal ``secret`` into ``cfg.n`` shares with Feldman commitments.

    ``coefficients`` (constant term excluded) pins the random part of the
    polynomial so a fixture can be checked by hand.
    """
    q = params.order_q
    if coefficients is None:
        rng = seeded_rng("split", rng_seed, round_id)
        coefficients = [rng.randrange(q) for _ in range(cfg.t - 1)]
    elif len(coefficients) != cfg.t - 1:
        raise ValueError("need exactly t-1 random coefficients")
    poly = [secret % q, *(c % q for c in coefficients)]
    holders = list(holders) if holders is not None else [f"ppsm-{i}" for i in range(1, cfg.n + 1)]
    if len(holders) != cfg.n:
        raise ValueError("one holder id per share")
    shares = [
        KeyShare(holders[i - 1], i, poly_eval(poly, i, q), round_id) for i in range(1, cfg.n + 1)
    ]
    commitments = tuple(commit(params, a) for a in poly)
    return shares, commitments


def verify_key_share(
    share: KeyShare, commitments: Sequence[int], params: GroupParams = DEFAULT_GROUP
) -> bool:
    return feldman_check(params, share.index, share.value, commitments)


def reconstruct_secret(
    shares: Sequence[KeyShare], t: int, params: GroupParams = DEFAULT_GROUP
) -> int:
    """Lagrange-combine at least ``t`` shares of one round."""
    rounds = {s.round_id for s in shares}
    if len(rounds) > 1:
        raise MixedRounds(f"shares span rounds {sorted(rounds)}")
    if len(shares) < t:
        raise InsufficientShares(f"{len(shares)} shares, threshold is {t}")
    return interpolate_at_zero([(s.index, s.value) for s in shares], params.order_q)


def partition_share(
    share: KeyShare, cfg: ThresholdConfig, rng_seed: int, params: GroupParams = DEFAULT_GROUP
) -> tuple[list[KeyShare], tuple[int, ...]]:
    """Second sharing layer: split one holder's share into sub-shares."""
    holders = [f"{share.holder_id}/{i}" for i in range(1, cfg.n + 1)]
    return split_secret(
        share.value,
        cfg,
        rng_seed,
        params,
        round_id=f"{share.round_id}/{share.index}",
        holders=holders,
    )


def derive_he_keys(
    master_secret: int, round_id: str, he_params: HEParams = DEFAULT_HE_PARAMS
) -> HEKeyPair:
    rng = seeded_rng("he-key-derivation", master_secret, round_id)
    return keygen(he_params, rng, round_id)


@dataclass(frozen=True)
class KeyRound:
    round_id: str
    group: GroupParams
    he_public_key: PublicKey = field(repr=False)
    commitments: tuple[int, ...] = field(repr=False)
    shares: Mapping[str, KeyShare] = field(repr=False)
    threshold: int
    created_at: int
    expires_at: int

    @property
    def he_params(self) -> HEParams:
        return self.he_public_key.params

    def commit_meta(self) -> dict:
        w = Writer().u32(len(self.commitments))
        for c in self.commitments:
            w.bigint(c)
        return {
            "round_id": self.round_id,
            "public_key": self.he_public_key.to_bytes(),
            "commitments": w.getvalue(),
            "created_at": self.created_at,
            "expires_at": self.expires_at,
        }


def key_refresh_due(clock: int, round_: KeyRound) -> bool:
    return clock >= round_.expires_at


def ensure_live(clock: int, round_: KeyRound) -> None:
    if key_refresh_due(clock, round_):
        raise ExpiredRound(f"round {round_.round_id} expired at {round_.expires_at}")


def create_key_round(
    transcript: DkgTranscript,
    holders: Mapping[int, str],
    created_at: int,
    cfg: ThresholdConfig,
    he_params: HEParams = DEFAULT_HE_PARAMS,
) -> KeyRound:
    """Turn a DKG transcript into a round: distribute shares, run the key ceremony."""
    rid = transcript.round_id
    shares = {
        holders[j]: KeyShare(holders[j], j, v, rid) for j, v in sorted(transcript.shares.items())
    }
    quorum = sorted(shares.values(), key=lambda s: s.index)[: transcript.threshold]
    master = reconstruct_secret(quorum, transcript.threshold, transcript.params)
    pk = derive_he_keys(master, rid, he_params).public_key
    del master
    return KeyRound(
        round_id=rid,
        group=transcript.params,
        he_public_key=pk,
        commitments=transcript.aggregate_commitments,
        shares=shares,
        threshold=transcript.threshold,
        created_at=created_at,
        expires_at=created_at + cfg.refresh_period_ms,
    )


def held_shares(round_: KeyRound, holder_ids: Iterable[str]) -> list[KeyShare]:
    return [round_.shares[h] for h in holder_ids]
