"""Replicated ledger with periodic blocks and a strict two-thirds vote.

Consensus is a single vote round per block. The middleware relies only on
the observable contract: at most one block per mempool period, and every
committed block is announced to the paired PPSManagers in order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from . import taint
from .bus import envelope_bytes
from .encoding import Writer, digest
from .errors import DuplicateTx, MalformedTx
from .taint import Site


class TxKind(str, enum.Enum):
    MESSAGE_COMMIT = "MessageCommit"
    KEY_ROUND_COMMIT = "KeyRoundCommit"
    ALLOCATION_LOG = "AllocationLog"
    RESULT_COMMIT = "ResultCommit"
    VERIFICATION_LOG = "VerificationLog"
    DECRYPTION_LOG = "DecryptionLog"


# Declared field order and wire type for every kind except MessageCommit,
# whose payload is the envelope itself.
SCHEMAS: dict[TxKind, tuple[tuple[str, str], ...]] = {
    TxKind.KEY_ROUND_COMMIT: (
        ("round_id", "text"),
        ("public_key", "blob"),
        ("commitments", "blob"),
        ("created_at", "u64"),
        ("expires_at", "u64"),
    ),
    TxKind.ALLOCATION_LOG: (
        ("task_id", "blob"),
        ("ppsm", "text"),
        ("computer", "text"),
        ("operands", "blobs"),
    ),
    TxKind.RESULT_COMMIT: (
        ("task_id", "blob"),
        ("ppsm", "text"),
        ("computer", "text"),
        ("result_hash", "blob"),
    ),
    TxKind.VERIFICATION_LOG: (
        ("task_id", "blob"),
        ("ppsm", "text"),
        ("verdict", "text"),
        ("digest", "blob"),
        ("tallied", "u32"),
        ("replicas", "u32"),
    ),
    TxKind.DECRYPTION_LOG: (
        ("task_id", "blob"),
        ("round_id", "text"),
        ("combiner", "text"),
        ("quorum", "texts"),
        ("seed_block", "blob"),
    ),
}

ENVELOPE_FIELDS = ("topic", "timestamp", "publisher_id", "body", "function_tag")


def canonical_payload(kind: TxKind, meta: Mapping[str, Any]) -> bytes:
    try:
        if kind is TxKind.MESSAGE_COMMIT:
            return envelope_bytes(*(meta[f] for f in ENVELOPE_FIELDS))
        w = Writer().text(kind.value)
        for name, typ in SCHEMAS[kind]:
            v = meta[name]
            if typ == "text":
                w.text(v)
            elif typ == "blob":
                w.blob(v)
            elif typ == "u64":
                w.u64(v)
            elif typ == "u32":
                w.u32(v)
            elif typ == "blobs":
                w.u32(len(v))
                for b in v:
                    w.blob(b)
            elif typ == "texts":
                w.u32(len(v))
                for s in v:
                    w.text(s)
        return w.getvalue()
    except (KeyError, TypeError, AttributeError) as exc:
        raise MalformedTx(f"{kind.value} payload does not match its schema: {exc}") from exc


@dataclass(frozen=True)
class LedgerTransaction:
    kind: TxKind
    payload_hash: bytes
    payload_meta: Mapping[str, Any] = field(repr=False)
    submitter: str
    submitted_at: int

    @classmethod
    def build(cls, kind: TxKind, meta: Mapping[str, Any], submitter: str, submitted_at: int) -> "LedgerTransaction":
        return cls(kind, digest(canonical_payload(kind, meta)), dict(meta), submitter, submitted_at)

    @property
    def tx_hash(self) -> bytes:
        return self.payload_hash

    def well_formed(self) -> bool:
        try:
            return digest(canonical_payload(self.kind, self.payload_meta)) == self.payload_hash
        except MalformedTx:
            return False


@dataclass(frozen=True)
class LedgerBlock:
    height: int
    parent_hash: bytes
    transactions: tuple[LedgerTransaction, ...]
    votes: frozenset[str]
    committed_at: int

    @property
    def block_hash(self) -> bytes:
        w = Writer().u64(self.height).blob(self.parent_hash).u64(self.committed_at)
        w.u32(len(self.transactions))
        for tx in self.transactions:
            w.blob(tx.tx_hash)
        return digest(w.getvalue())


@dataclass
class ValidatorNode:
    id: str
    ppsm_id: str
    honest: bool = True
    silent: bool = False

    def verdict(self, block: LedgerBlock) -> bool:
        if not self.honest:
            return False
        return all(tx.well_formed() for tx in block.transactions)


class CommitOutcome(enum.Enum):
    COMMITTED = "Committed"
    REJECTED = "Rejected"


@dataclass(frozen=True)
class BlockNotification:
    height: int
    block_hash: bytes
    tx_hashes: tuple[bytes, ...]
    validator_id: str
    ppsm_id: str
    relayed_by: str | None = None


def commits(yes_votes: int, n: int) -> bool:
    """Strict two-thirds rule, in integers."""
    return 3 * yes_votes > 2 * n


DUMP_HEADER = "height\tkind\thash\tsubmitter\ttimestamp"


def write_dump(lines: Sequence[str], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(DUMP_HEADER + "\n")
        fh.writelines(line + "\n" for line in lines)


class Ledger:
    def __init__(
        self,
        validators: Sequence[ValidatorNode],
        block_period_ms: int = 1000,
        genesis_txs: Iterable[LedgerTransaction] = (),
        start_time: int = 0,
    ) -> None:
        if block_period_ms <= 0:
            raise ValueError("block period must be positive")
        if len({v.id for v in validators}) != len(validators):
            raise ValueError("validator ids must be unique")
        self.validators = list(validators)
        self.block_period_ms = block_period_ms
        self.mempool: dict[bytes, LedgerTransaction] = {}
        self.blocks: list[LedgerBlock] = []
        self._index: dict[bytes, tuple[LedgerTransaction, int]] = {}
        self.rejected_blocks = 0
        self._next_block_at = start_time + block_period_ms
        genesis = LedgerBlock(
            0,
            b"\x00" * 32,
            tuple(genesis_txs),
            frozenset(v.id for v in self.validators),
            start_time,
        )
        self._append(genesis)

    @property
    def n(self) -> int:
        return len(self.validators)

    @property
    def head(self) -> LedgerBlock:
        return self.blocks[-1]

    def _append(self, block: LedgerBlock) -> None:
        self.blocks.append(block)
        for tx in block.transactions:
            self._index[tx.tx_hash] = (tx, block.height)

    def submit_tx(self, tx: LedgerTransaction) -> bytes:
        taint.check(Site.LEDGER, tx.payload_meta)
        if not tx.well_formed():
            raise MalformedTx(f"{tx.kind.value} payload hash does not match its metadata")
        h = tx.tx_hash
        if h in self.mempool or h in self._index:
            raise DuplicateTx(h.hex())
        self.mempool[h] = tx
        return h

    def produce_block(self, clock: int) -> LedgerBlock | None:
        """Drain the mempool into one block if a period boundary has passed."""
        if clock < self._next_block_at:
            return None
        p = self.block_period_ms
        self._next_block_at = (clock // p + 1) * p
        if not self.mempool:
            return None
        txs = tuple(self.mempool.values())
        block = LedgerBlock(self.head.height + 1, self.head.block_hash, txs, frozenset(), clock)
        verdicts = {v.id: v.verdict(block) for v in self.validators}
        outcome = self.vote_and_commit(block, verdicts)
        if outcome is CommitOutcome.REJECTED:
            return None
        return self.head

    def vote_and_commit(self, block: LedgerBlock, verdicts: Mapping[str, bool]) -> CommitOutcome:
        yes = frozenset(v for v, ok in verdicts.items() if ok)
        if not commits(len(yes), self.n):
            self.rejected_blocks += 1
            return CommitOutcome.REJECTED
        committed = LedgerBlock(block.height, block.parent_hash, block.transactions, yes, block.committed_at)
        self._append(committed)
        for tx in committed.transactions:
            self.mempool.pop(tx.tx_hash, None)
        return CommitOutcome.COMMITTED

    def ping_pps(self, block: LedgerBlock) -> list[BlockNotification]:
        if block.height >= len(self.blocks) or self.blocks[block.height] is not block:
            return []
        tx_hashes = tuple(tx.tx_hash for tx in block.transactions)
        speakers = [v for v in self.validators if not v.silent]
        out = []
        for v in self.validators:
            relay = None
            if v.silent:
                if not speakers:
                    continue
                relay = speakers[0].id
            out.append(BlockNotification(block.height, block.block_hash, tx_hashes, v.id, v.ppsm_id, relay))
        return out

    def query(self, tx_hash: bytes) -> tuple[LedgerTransaction, int] | None:
        return self._index.get(tx_hash)

    def block_at(self, height: int) -> LedgerBlock:
        return self.blocks[height]

    def state_digest(self) -> bytes:
        return digest(b"".join(b.block_hash for b in self.blocks))

    def dump_lines(self) -> list[str]:
        return [
            f"{b.height}\t{tx.kind.value}\t{tx.tx_hash.hex()}\t{tx.submitter}\t{tx.submitted_at}"
            for b in self.blocks
            for tx in b.transactions
        ]

    def dump(self, path: str) -> None:
        write_dump(self.dump_lines(), path)

    @classmethod
    def replay(cls, validators: Sequence[ValidatorNode], block_period_ms: int, blocks: Sequence[LedgerBlock]) -> "Ledger":
        """Rebuild a ledger from a committed log, re-checking every transaction."""
        genesis, *rest = blocks
        ledger = cls(validators, block_period_ms, genesis.transactions, genesis.committed_at)
        for b in rest:
            for tx in b.transactions:
                ledger.submit_tx(tx)
            if b.parent_hash != ledger.head.block_hash:
                raise ValueError(f"block {b.height} does not extend the replayed chain")
            verdicts = {v: (v in b.votes) for v in (x.id for x in validators)}
            if ledger.vote_and_commit(b, verdicts) is not CommitOutcome.COMMITTED:
                raise ValueError(f"block {b.height} lacks a two-thirds vote")
        return ledger
