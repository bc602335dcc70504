"""PPSManager: the broker between publishers, computers and the ledger.

Every manager runs the same state machine on the same ledger, so replicas
of a task are allocated, tallied and decided identically without any
direct coordination. The only point-to-point step is the share collection
performed by the combiner of a reconstruction quorum.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from . import taint
from .bus import RESULTS, TO_ALLOCATE, TO_COMPUTE, TO_DECRYPT, TO_PPSM, TO_SUBSCRIBER, MessageEnvelope, compute_envelope_hash
from .compute import decode_plain
from .encoding import Reader, Writer, digest, seeded_rng
from .errors import (
    EmptyComputerPool,
    ExpiredRound,
    InsufficientQuorum,
    MixedRounds,
    RoundMismatch,
    ShareVerificationFailed,
)
from .he import Ciphertext, Plaintext, decode_fixed, decrypt
from .ledger import BlockNotification, LedgerTransaction, TxKind
from .task import ComputationResult, Function, Task, derive_task_id
from .taint import Origin, Site
from .threshold import KeyRound, KeyShare, derive_he_keys, ensure_live, reconstruct_secret, verify_key_share

if TYPE_CHECKING:
    from .system import Network

COMMIT_TIMEOUT_BLOCKS = 3
VERIFY_TIMEOUT_BLOCKS = 3


class Verdict(str, enum.Enum):
    VERIFIED = "Verified"
    REJECTED = "Rejected"


@dataclass(frozen=True)
class VerificationRecord:
    task_id: bytes
    tally: Mapping[bytes, int]
    verdict: Verdict
    digest: bytes | None
    replicas: int

    @property
    def tallied(self) -> int:
        return sum(self.tally.values())


def verify_results(task_id: bytes, hashes: Sequence[bytes], replicas: int) -> VerificationRecord:
    """Verified(d) iff strictly more than two thirds of the replicas report ``d``."""
    tally = Counter(hashes)
    if tally:
        # Ties cannot both exceed 2r/3, so the choice among equals is moot.
        best, count = max(sorted(tally.items()), key=lambda kv: kv[1])
        if 3 * count > 2 * replicas:
            return VerificationRecord(task_id, dict(tally), Verdict.VERIFIED, best, replicas)
    return VerificationRecord(task_id, dict(tally), Verdict.REJECTED, None, replicas)


def select_reconstruction_quorum(
    round_id: str, block_hash: bytes, live: Iterable[str], t: int
) -> list[str]:
    members = sorted(live)
    if len(members) < t:
        raise InsufficientQuorum(f"{len(members)} live managers, threshold is {t}")
    return sorted(seeded_rng("quorum", block_hash, round_id).sample(members, t))


def collaborative_decrypt(
    contributions: Mapping[str, KeyShare],
    key_round: KeyRound,
    ciphertext: Ciphertext,
    clock: int,
    scale: int = 1,
) -> Plaintext:
    """Check every contributed share, rebuild the round key, decrypt, forget the key."""
    ensure_live(clock, key_round)
    if ciphertext.round_id != key_round.round_id:
        raise RoundMismatch(f"ciphertext round {ciphertext.round_id}, key round {key_round.round_id}")
    for member, share in sorted(contributions.items()):
        if share.round_id != key_round.round_id:
            raise MixedRounds(f"{member} contributed a share of round {share.round_id}")
        if not verify_key_share(share, key_round.commitments, key_round.group):
            raise ShareVerificationFailed(member, "contributed share fails the commitment check")
    with taint.at_site(Site.COLLABORATIVE_DECRYPT):
        master = reconstruct_secret(list(contributions.values()), key_round.threshold, key_round.group)
        keys = derive_he_keys(master, key_round.round_id, key_round.he_params)
        del master
        pt = decrypt(keys.secret_key, ciphertext, scale=scale)
        del keys
        taint.check(Site.COLLABORATIVE_DECRYPT, pt)
    return pt


# ---------------------------------------------------------------------------
# query registry


@dataclass(frozen=True)
class QueryTask:
    name: str
    function: Function


@dataclass(frozen=True)
class Query:
    """Which publishers feed a function tag and what is computed from them."""

    function_tag: int
    publishers: tuple[str, ...]
    tasks: tuple[QueryTask, ...]
    scale: int = 1

    def decode_scale(self, fn: Function) -> int:
        return self.scale ** (1 + fn.depth(len(self.publishers)))


@dataclass(frozen=True)
class Insight:
    task_id: bytes
    name: str
    value: Fraction
    verdict: str
    function_tag: int
    job_timestamp: int
    record_ref: bytes

    def to_bytes(self) -> bytes:
        return (
            Writer()
            .blob(self.task_id)
            .text(self.name)
            .text(str(self.value))
            .text(self.verdict)
            .u8(self.function_tag)
            .u64(self.job_timestamp)
            .blob(self.record_ref)
            .getvalue()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Insight":
        r = Reader(data)
        return cls(r.blob(), r.text(), Fraction(r.text()), r.text(), r.u8(), r.u64(), r.blob())


@dataclass
class TaskState:
    task: Task
    query: Query
    job_timestamp: int
    al_hash: bytes
    dispatched: bool = False
    results: dict[str, bytes] = field(default_factory=dict)  # issuing ppsm -> result hash
    submitted_verdict: bool = False
    deadline_set: bool = False


class PPSManager:
    def __init__(self, net: "Network", manager_id: str, index: int, validator_id: str) -> None:
        self.net = net
        self.id = manager_id
        self.index = index
        self.validator_id = validator_id
        self.shares: dict[str, KeyShare] = {}
        self.tamper_share = False
        self.queue = net.new_queue()
        self.buffer: dict[bytes, tuple[MessageEnvelope, int]] = {}
        self.groups: dict[tuple[int, int], dict[str, MessageEnvelope]] = {}
        self.tasks: dict[bytes, TaskState] = {}
        self.results_cache: dict[bytes, bytes] = {}
        self.decided: set[bytes] = set()
        self.allocators: dict[bytes, set[str]] = {}  # from committed AllocationLogs
        self.pending_delivery: dict[bytes, Insight] = {}
        self.events: list[tuple[int, str, str]] = []

    # -- plumbing

    @property
    def plain(self) -> bool:
        return self.net.plain

    @property
    def active(self) -> bool:
        """In plain mode a single home manager does all the work."""
        return not self.plain or self.index == 0

    def log(self, kind: str, task_id: bytes = b"") -> None:
        self.events.append((self.net.sim.now, kind, task_id.hex()))
        self.net.count(kind)

    def provide_share(self, round_id: str) -> KeyShare:
        share = self.shares[round_id]
        if self.tamper_share:
            share = KeyShare(share.holder_id, share.index, share.value + 1, share.round_id)
        return share

    def _submit(self, kind: TxKind, meta: dict) -> bytes:
        tx = LedgerTransaction.build(kind, meta, self.id, self.net.sim.now)
        return self.net.ledger.submit_tx(tx)

    def _publish(self, topic: str, body: bytes, taint_origin: Origin | None = None, tag: int = 0) -> None:
        env = MessageEnvelope(topic, self.id, self.net.sim.now, body, tag, taint=taint_origin)
        self.net.bus.publish(env)

    # -- To-PPSM

    def on_envelope(self, env: MessageEnvelope) -> None:
        if not self.active:
            return
        taint.check(Site.PPSM, env)
        self.queue.submit(self.net.costs.hash, self._validate_envelope, env)

    def _validate_envelope(self, env: MessageEnvelope) -> None:
        h = compute_envelope_hash(env)
        if env.serialized_hash != h:
            self.log("IntegrityFailure", h)
            return
        self.buffer[h] = (env, self.net.sim.now)
        self._match_buffer()

    def _match_buffer(self) -> None:
        timeout = COMMIT_TIMEOUT_BLOCKS * self.net.ledger.block_period_ms
        for h, (env, received) in list(self.buffer.items()):
            if self.net.ledger.query(h) is not None:
                del self.buffer[h]
                self.log("Validated", h)
                self._group(env)
            elif self.net.sim.now - received >= timeout:
                del self.buffer[h]
                self.log("IntegrityFailure", h)

    def _group(self, env: MessageEnvelope) -> None:
        query = self.net.queries.get(env.function_tag)
        if query is None or env.publisher_id not in query.publishers:
            self.log("UnknownQuery", env.serialized_hash)
            return
        key = (env.function_tag, env.timestamp)
        group = self.groups.setdefault(key, {})
        group[env.publisher_id] = env
        if len(group) == len(query.publishers):
            # Stage the complete operand set through To-Allocate, addressed to ourselves.
            self._publish(TO_ALLOCATE, Writer().u8(key[0]).u64(key[1]).getvalue(), tag=key[0])

    def on_allocate(self, env: MessageEnvelope) -> None:
        if env.publisher_id != self.id:
            return
        r = Reader(env.body)
        key = (r.u8(), r.u64())
        group = self.groups.pop(key, None)
        if group is None:
            return
        query = self.net.queries[key[0]]
        for qt in query.tasks:
            self.allocate_task(query, qt, [group[p] for p in query.publishers], key[1])

    # -- allocation

    def allocate_task(
        self, query: Query, qt: QueryTask, envs: Sequence[MessageEnvelope], job_ts: int
    ) -> Task | None:
        pool = sorted(cid for cid, c in self.net.computers.items() if c.registered)
        if not pool:
            raise EmptyComputerPool("no registered computers")
        hashes = tuple(e.serialized_hash for e in envs)
        operands = tuple(e.body for e in envs)
        task_id = derive_task_id(hashes, qt.function, qt.name)
        rounds = {"" if self.plain else Reader(o).text() for o in operands}
        if len(rounds) != 1:
            self.log("RoundMismatch", task_id)
            self.net.report_outcome(task_id, qt.name, query.function_tag, job_ts, "Rejected")
            return None
        last_height = max(self.net.ledger.query(h)[1] for h in hashes)
        seed_block = self.net.ledger.block_at(last_height).block_hash
        perm = seeded_rng("allocate", digest(seed_block + task_id)).sample(pool, len(pool))
        computer = perm[self.index % len(pool)]
        task = Task(task_id, qt.name, qt.function, operands, hashes, computer, self.id, rounds.pop())
        al = self._submit(
            TxKind.ALLOCATION_LOG,
            {"task_id": task_id, "ppsm": self.id, "computer": computer, "operands": list(hashes)},
        )
        self.tasks[task_id] = TaskState(task, query, job_ts, al)
        self.net.register_task(task_id, qt.name, query.function_tag, job_ts)
        self.log("Allocate", task_id)
        return task

    # -- ledger pings

    def on_block_ping(self, note: BlockNotification) -> None:
        block = self.net.ledger.block_at(note.height)
        self._match_buffer()
        if not self.active:
            return
        touched: dict[bytes, TaskState] = {}
        for tx in block.transactions:
            meta = tx.payload_meta
            if tx.kind is TxKind.ALLOCATION_LOG:
                self.allocators.setdefault(meta["task_id"], set()).add(meta["ppsm"])
                if meta["ppsm"] == self.id:
                    self._dispatch(meta["task_id"])
            elif tx.kind is TxKind.RESULT_COMMIT:
                st = self.tasks.get(meta["task_id"])
                if st is not None and not st.submitted_verdict:
                    st.results.setdefault(meta["ppsm"], meta["result_hash"])
                    touched[meta["task_id"]] = st
            elif tx.kind is TxKind.VERIFICATION_LOG:
                self._on_verification_commit(meta, note.block_hash)
            elif tx.kind is TxKind.DECRYPTION_LOG and meta["combiner"] == self.id:
                self._deliver(meta["task_id"])
        # Tally a whole block before deciding, so the logged count is complete.
        for st in touched.values():
            self._evaluate(st)

    def _dispatch(self, task_id: bytes) -> None:
        st = self.tasks.get(task_id)
        if st is None or st.dispatched:
            return
        st.dispatched = True
        self._publish(TO_COMPUTE, st.task.to_bytes())

    # -- results and verification

    def on_result(self, env: MessageEnvelope) -> None:
        if not self.active:
            return
        taint.check(Site.PPSM, env)
        res = ComputationResult.from_bytes(env.body)
        self.results_cache.setdefault(res.result_hash, res.result)

    def _evaluate(self, st: TaskState) -> None:
        if st.submitted_verdict:
            return
        if self.plain:
            st.submitted_verdict = True
            self._deliver_plain(st, next(iter(st.results.values())))
            return
        replicas = self.net.replicas
        rec = verify_results(st.task.task_id, list(st.results.values()), replicas)
        if rec.verdict is Verdict.VERIFIED or len(st.results) >= replicas:
            self.queue.submit(self.net.costs.hash, self._submit_verdict, st, rec)
        elif not st.deadline_set:
            st.deadline_set = True
            wait = VERIFY_TIMEOUT_BLOCKS * self.net.ledger.block_period_ms
            self.net.sim.schedule(self.net.sim.now + wait, self._verify_deadline, st)

    def _verify_deadline(self, st: TaskState) -> None:
        if not st.submitted_verdict:
            rec = verify_results(st.task.task_id, list(st.results.values()), self.net.replicas)
            self._submit_verdict(st, rec)

    def _submit_verdict(self, st: TaskState, rec: VerificationRecord) -> None:
        if st.submitted_verdict:
            return
        st.submitted_verdict = True
        self.log("Verify", rec.task_id)
        self._submit(
            TxKind.VERIFICATION_LOG,
            {
                "task_id": rec.task_id,
                "ppsm": self.id,
                "verdict": rec.verdict.value,
                "digest": rec.digest or b"",
                "tallied": rec.tallied,
                "replicas": rec.replicas,
            },
        )

    def _on_verification_commit(self, meta: Mapping, block_hash: bytes) -> None:
        task_id = meta["task_id"]
        st = self.tasks.get(task_id)
        if task_id in self.decided or st is None:
            return
        self.decided.add(task_id)
        if meta["verdict"] != Verdict.VERIFIED.value:
            self.log("RejectionNotice", task_id)
            self.net.report_outcome(task_id, st.task.name, st.query.function_tag, st.job_timestamp, "Rejected")
            return
        self.net.record_verified(task_id, meta["digest"])
        self._start_quorum(st, meta["digest"], block_hash)

    # -- reconstruction

    def _start_quorum(self, st: TaskState, result_digest: bytes, block_hash: bytes) -> None:
        live = [m for m in self.net.ppsms if m not in self.net.flagged]
        try:
            quorum = select_reconstruction_quorum(st.task.round_id, block_hash, live, self.net.threshold)
        except InsufficientQuorum:
            self.log("InsufficientQuorum", st.task.task_id)
            self.net.report_outcome(
                st.task.task_id, st.task.name, st.query.function_tag, st.job_timestamp, "Undecryptable"
            )
            return
        # The combiner must hold the task; prefer quorum members, then any live allocator.
        holders = self.allocators.get(st.task.task_id, set())
        candidates = [m for m in quorum if m in holders] or sorted(holders.intersection(live))
        if candidates and candidates[0] == self.id:
            c = self.net.costs
            cost = c.hash * len(quorum) + c.reconstruct + c.keygen + c.decrypt
            self.log("QuorumSelected", st.task.task_id)
            self._publish(TO_DECRYPT, Writer().blob(st.task.task_id).text(st.task.round_id).getvalue())
            self.queue.submit(cost, self._combine, st, result_digest, block_hash, quorum)

    def _combine(self, st: TaskState, result_digest: bytes, block_hash: bytes, quorum: list[str]) -> None:
        task = st.task
        key_round = self.net.keys.rounds.get(task.round_id)
        contributions = {m: self.net.ppsms[m].provide_share(task.round_id) for m in quorum}
        ct = Ciphertext.from_bytes(self.results_cache[result_digest], self.net.he_params)
        scale = st.query.decode_scale(task.function)
        try:
            pt = collaborative_decrypt(contributions, key_round, ct, self.net.sim.now, scale)
        except ShareVerificationFailed as exc:
            self.log(f"ShareVerificationFailed:{exc.member}", task.task_id)
            self.net.flagged.add(exc.member)
            # Every manager re-derives the quorum; only the new combiner acts.
            for m in self.net.ppsms.values():
                other = m.tasks.get(task.task_id)
                if other is not None:
                    m._start_quorum(other, result_digest, block_hash)
            return
        except ExpiredRound:
            self.log("ExpiredRound", task.task_id)
            self.net.requeue(st.query.function_tag, st.job_timestamp, task.name)
            return
        self.log("Decrypt", task.task_id)
        value = decode_fixed(pt.value, scale, self.net.he_params.plaintext_modulus)
        self.pending_delivery[task.task_id] = Insight(
            task.task_id, task.name, value, Verdict.VERIFIED.value,
            st.query.function_tag, st.job_timestamp, result_digest,
        )
        self._submit(
            TxKind.DECRYPTION_LOG,
            {
                "task_id": task.task_id,
                "round_id": task.round_id,
                "combiner": self.id,
                "quorum": quorum,
                "seed_block": block_hash,
            },
        )

    # -- delivery

    def _deliver(self, task_id: bytes) -> None:
        insight = self.pending_delivery.pop(task_id, None)
        if insight is None:
            return
        self.log("Deliver", task_id)
        self._publish(TO_SUBSCRIBER, insight.to_bytes(), Origin.QUORUM_DECRYPTED, insight.function_tag)

    def _deliver_plain(self, st: TaskState, result_hash: bytes) -> None:
        raw = self.results_cache.get(result_hash)
        if raw is None:
            self.log("MissingResult", st.task.task_id)
            return
        value = Fraction(decode_plain(raw), st.query.decode_scale(st.task.function))
        insight = Insight(
            st.task.task_id, st.task.name, value, "Plain",
            st.query.function_tag, st.job_timestamp, result_hash,
        )
        self.log("Deliver", st.task.task_id)
        self._publish(TO_SUBSCRIBER, insight.to_bytes(), None, insight.function_tag)

    def subscribe(self) -> None:
        self.net.bus.subscribe(self.id, TO_PPSM, self.on_envelope)
        self.net.bus.subscribe(self.id, RESULTS, self.on_result)
        self.net.bus.subscribe(self.id, TO_ALLOCATE, self.on_allocate)
