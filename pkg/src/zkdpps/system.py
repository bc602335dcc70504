"""Wiring of every node role onto one simulated timeline.

:class:`Network` owns the simulator and everything scheduled on it; the scenario harness releases readings and listens on ``To-Subscriber``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

from . import taint
from .bus import RESULTS, TO_COMPUTE, TO_PPSM, MessageEnvelope, PublishStatus, PubSubBus
from .compute import (
    ComputerNode,
    FaultMode,
    encode_plain,
    execute_task,
    register_computer,
    result_commit_tx,
)
from .dkg import run_dkg
from .encoding import derive_seed
from .he import DEFAULT_HE_PARAMS, HEParams, Plaintext, encrypt
from .ledger import Ledger, LedgerBlock, LedgerTransaction, TxKind, ValidatorNode
from .ppsm import PPSManager, Query
from .sim import PRIORITY_BLOCK, ServiceQueue, Simulator
from .taint import Site
from .task import Task, count_ops
from .threshold import KeyRound, ThresholdConfig, create_key_round


@dataclass(frozen=True)
class CostModel:
    """Virtual processing time per operation, in milliseconds."""

    encrypt: int = 200
    he_add: int = 120
    he_mul: int = 450
    decrypt: int = 150
    reconstruct: int = 21
    keygen: int = 9
    hash: int = 2
    plain_op: int = 1

    @classmethod
    def zero(cls) -> "CostModel":
        return cls(0, 0, 0, 0, 0, 0, 0, 0)

    def task_cost(self, task: Task, plain: bool) -> int:
        ops = count_ops(task.function, len(task.operands))
        if plain:
            return self.plain_op * sum(ops.values()) + self.hash
        return self.he_add * (ops["add"] + ops["scalar"]) + self.he_mul * ops["mul"] + self.hash


@dataclass(frozen=True)
class SystemConfig:
    validators: int = 5
    threshold: int = 3
    block_period_ms: int = 1000
    refresh_ms: int = 300_000
    refresh_lead_blocks: int = 10
    computers: int = 5
    computer_faults: Mapping[str, FaultMode] = field(default_factory=dict)
    faulty_validators: int = 0
    silent_validators: int = 0
    tampering_managers: tuple[str, ...] = ()
    plain: bool = False
    seed: int = 0
    he_params: HEParams = DEFAULT_HE_PARAMS
    costs: CostModel = CostModel()
    bus_latency_ms: int = 0
    credit_capacity: int = 5
    credit_refill_per_s: Fraction = Fraction(2)

    @property
    def refresh_lead_ms(self) -> int:
        return min(self.refresh_lead_blocks * self.block_period_ms, self.refresh_ms // 2)


def manager_id(i: int) -> str:
    return f"ppsm-{i}"


def computer_id(i: int) -> str:
    return f"computer-{i}"


class KeyManager:
    """Runs a DKG per round, hands shares to the managers, tracks which round is live."""

    def __init__(self, net: "Network") -> None:
        self.net = net
        self.rounds: dict[str, KeyRound] = {}
        self.committed: list[str] = []
        self.cfg = ThresholdConfig(net.cfg.validators, net.cfg.threshold, net.cfg.refresh_ms)
        self._next = 0

    def new_round(self, created_at: int) -> KeyRound:
        rid = f"round-{self._next}"
        self._next += 1
        run = run_dkg(rid, self.cfg.n, self.cfg.t, derive_seed("dkg", self.net.cfg.seed, rid))
        holders = {j: manager_id(j) for j in range(1, self.cfg.n + 1)}
        kr = create_key_round(run.transcript, holders, created_at, self.cfg, self.net.he_params)
        self.rounds[rid] = kr
        for holder, share in kr.shares.items():
            self.net.ppsms[holder].shares[rid] = share
        return kr

    def genesis(self) -> LedgerTransaction:
        kr = self.new_round(self.net.sim.now)
        self.committed.append(kr.round_id)
        self._schedule_refresh(kr)
        return LedgerTransaction.build(TxKind.KEY_ROUND_COMMIT, kr.commit_meta(), "dkg", kr.created_at)

    def _schedule_refresh(self, kr: KeyRound) -> None:
        self.net.sim.schedule(kr.expires_at - self.net.cfg.refresh_lead_ms, self._refresh)

    def _refresh(self) -> None:
        kr = self.new_round(self.net.sim.now)
        tx = LedgerTransaction.build(TxKind.KEY_ROUND_COMMIT, kr.commit_meta(), "dkg", kr.created_at)
        self.net.ledger.submit_tx(tx)
        self.net.count("KeyRefresh")
        self._schedule_refresh(kr)

    def on_block(self, block: LedgerBlock) -> None:
        for tx in block.transactions:
            if tx.kind is TxKind.KEY_ROUND_COMMIT:
                self.committed.append(tx.payload_meta["round_id"])

    def current(self, now: int) -> KeyRound:
        for rid in reversed(self.committed):
            kr = self.rounds[rid]
            if kr.created_at <= now < kr.expires_at:
                return kr
        return self.rounds[self.committed[-1]]


class Publisher:
    def __init__(self, net: "Network", publisher_id: str) -> None:
        self.net = net
        self.id = publisher_id
        self.queue = net.new_queue()
        net.bus.register_publisher(publisher_id, net.cfg.credit_capacity, net.cfg.credit_refill_per_s)

    def release(self, function_tag: int, timestamp: int, value: Plaintext) -> None:
        taint.check(Site.PUBLISHER, value)
        cost = self.net.costs.plain_op if self.net.plain else self.net.costs.encrypt
        self.queue.submit(cost, self._seal_and_send, function_tag, timestamp, value)

    def _seal_and_send(self, function_tag: int, timestamp: int, value: Plaintext) -> None:
        if self.net.plain:
            body = encode_plain(value.centered(self.net.he_params.plaintext_modulus))
        else:
            kr = self.net.keys.current(self.net.sim.now)
            seed = derive_seed("publish", self.net.cfg.seed, self.id, timestamp)
            body = encrypt(kr.he_public_key, value, seed).to_bytes()
            self.net.count("Encrypt")
        env = MessageEnvelope(TO_PPSM, self.id, timestamp, body, function_tag).sealed()
        self._send(env)

    def _send(self, env: MessageEnvelope) -> None:
        status = self.net.bus.publish(env)
        if status is PublishStatus.RATE_LIMITED:
            self.net.count("RateLimited")
            self.net.sim.schedule(self.net.bus.next_token_at(self.id), self._send, env)
            return
        meta = {
            "topic": env.topic,
            "timestamp": env.timestamp,
            "publisher_id": env.publisher_id,
            "body": env.body,
            "function_tag": env.function_tag,
        }
        self.net.ledger.submit_tx(LedgerTransaction.build(TxKind.MESSAGE_COMMIT, meta, self.id, self.net.sim.now))


class ComputerAgent:
    def __init__(self, net: "Network", node: ComputerNode) -> None:
        self.net = net
        self.node = node
        self.queue = net.new_queue()
        net.bus.subscribe(node.id, TO_COMPUTE, self.on_task)

    def on_task(self, env: MessageEnvelope) -> None:
        task = Task.from_bytes(env.body)
        if task.assigned_computer != self.node.id:
            return
        self.queue.submit(self.net.costs.task_cost(task, self.net.plain), self._execute, task)

    def _execute(self, task: Task) -> None:
        params = None if self.net.plain else self.net.he_params
        result = execute_task(self.node, task, params)
        self.net.count("Execute")
        if result is None:
            return
        self.net.bus.publish(MessageEnvelope(RESULTS, self.node.id, self.net.sim.now, result.to_bytes()))
        self.net.ledger.submit_tx(result_commit_tx(result, self.net.sim.now))
        self.net.result_commits.setdefault(result.task_id, {})[self.node.id] = result.result_hash


class Network:
    def __init__(self, cfg: SystemConfig) -> None:
        if not 1 <= cfg.threshold <= cfg.validators:
            raise ValueError("threshold must lie in [1, validators]")
        self.cfg = cfg
        self.plain = cfg.plain
        self.he_params = cfg.he_params
        self.costs = cfg.costs
        self.threshold = cfg.threshold
        self.sim = Simulator()
        self.bus = PubSubBus(self.sim, cfg.bus_latency_ms)
        self.counters: Counter[str] = Counter()
        self.queues: list[ServiceQueue] = []
        self.queries: dict[int, Query] = {}
        self.flagged: set[str] = set()
        self.task_info: dict[bytes, tuple[str, int, int]] = {}
        self.outcomes: dict[bytes, str] = {}
        self.verified_digest: dict[bytes, bytes] = {}
        self.result_commits: dict[bytes, dict[str, bytes]] = {}
        self.on_outcome: Callable[[bytes, str, int, int, str], None] | None = None
        self.on_requeue: Callable[[int, int, str], None] | None = None

        n = cfg.validators
        self.ppsms: dict[str, PPSManager] = {}
        validators = []
        for i in range(1, n + 1):
            vid, mid = f"validator-{i}", manager_id(i)
            validators.append(
                ValidatorNode(
                    vid,
                    mid,
                    honest=i <= n - cfg.faulty_validators,
                    silent=i <= cfg.silent_validators,
                )
            )
            m = PPSManager(self, mid, i - 1, vid)
            m.tamper_share = mid in cfg.tampering_managers
            self.ppsms[mid] = m
        self.replicas = 1 if self.plain else n

        self.computers: dict[str, ComputerNode] = {}
        self.agents: list[ComputerAgent] = []
        for i in range(1, cfg.computers + 1):
            cid = computer_id(i)
            node = ComputerNode(cid, fault_mode=cfg.computer_faults.get(cid, FaultMode.HONEST))
            register_computer(self.computers, node)
            self.agents.append(ComputerAgent(self, node))

        self.keys = KeyManager(self)
        genesis = [] if self.plain else [self.keys.genesis()]
        self.ledger = Ledger(validators, cfg.block_period_ms, genesis, self.sim.now)
        for m in self.ppsms.values():
            m.subscribe()
        self.publishers: dict[str, Publisher] = {}
        self.sim.schedule(cfg.block_period_ms, self._tick, priority=PRIORITY_BLOCK)

    # -- hooks used by managers

    def new_queue(self) -> ServiceQueue:
        q = ServiceQueue(self.sim)
        self.queues.append(q)
        return q

    def count(self, kind: str) -> None:
        self.counters[kind.split(":")[0]] += 1

    def register_task(self, task_id: bytes, name: str, tag: int, job_ts: int) -> None:
        self.task_info[task_id] = (name, tag, job_ts)

    def report_outcome(self, task_id: bytes, name: str, tag: int, job_ts: int, verdict: str) -> None:
        if task_id in self.outcomes:
            return
        self.outcomes[task_id] = verdict
        if self.on_outcome is not None:
            self.on_outcome(task_id, name, tag, job_ts, verdict)

    def record_verified(self, task_id: bytes, result_digest: bytes) -> None:
        self.verified_digest.setdefault(task_id, result_digest)

    def requeue(self, tag: int, job_ts: int, name: str) -> None:
        self.count("Requeue")
        if self.on_requeue is not None:
            self.on_requeue(tag, job_ts, name)

    # -- setup for the harness

    def add_query(self, query: Query) -> None:
        self.queries[query.function_tag] = query
        for p in query.publishers:
            if p not in self.publishers:
                self.publishers[p] = Publisher(self, p)

    # -- consensus driver

    def _tick(self) -> None:
        block = self.ledger.produce_block(self.sim.now)
        if block is not None:
            self.count("Block")
            self.keys.on_block(block)
            for note in self.ledger.ping_pps(block):
                self.sim.schedule(self.sim.now, self.ppsms[note.ppsm_id].on_block_ping, note)
        self.sim.schedule(self.sim.now + self.cfg.block_period_ms, self._tick, priority=PRIORITY_BLOCK)

    def event_log(self) -> list[str]:
        lines = []
        for mid, m in self.ppsms.items():
            lines.extend(f"{t}\t{mid}\t{kind}\t{tid}" for t, kind, tid in m.events)
        return lines
