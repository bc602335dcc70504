"""Supply-chain scenarios with their oracles, plus the run and sweep drivers.

Oracles compute each insight directly from the raw inputs with ordinary
rational arithmetic. They share nothing with the task interpreters, so an
agreement between the two is evidence that the pipeline preserved the
values end to end.
"""

from __future__ import annotations

import enum
import random
import time
from dataclasses import dataclass, field, replace
from decimal import Decimal
from fractions import Fraction
from typing import Callable, Mapping, Sequence

from . import taint
from .bus import TO_SUBSCRIBER, MessageEnvelope
from .compute import FaultMode
from .encoding import seeded_rng
from .errors import ConfigError
from .he import WIDE_HE_PARAMS, HEParams, Plaintext, encode_fixed
from .metrics import MetricsReport, TaskRecord
from .ppsm import Insight, Query, QueryTask
from .system import CostModel, Network, SystemConfig, computer_id
from .taint import Site, TaintMonitor
from .task import Function, Step, StepOp
from .threshold import ThresholdConfig, reconstruct_secret, split_secret

SWEEP_PERIODS_MS = (500, 1000, 5000, 10000)


class Mode(str, enum.Enum):
    ZK = "zk"
    PLAIN = "plain"


Inputs = Mapping[str, Decimal]


@dataclass(frozen=True)
class Scenario:
    number: int
    name: str
    publishers: tuple[str, ...]
    tasks: tuple[QueryTask, ...]
    scale: int
    draw: Callable[[random.Random], dict[str, Decimal]]
    oracle: Callable[[Inputs], dict[str, Fraction]]
    summarize: Callable[[Mapping[str, Fraction]], str]

    def query(self) -> Query:
        return Query(self.number, self.publishers, self.tasks, self.scale)


def _ints(rng: random.Random, names: Sequence[str], lo: int, hi: int) -> dict[str, Decimal]:
    return {n: Decimal(rng.randint(lo, hi)) for n in names}


def hazmat_insurance() -> Scenario:
    """Two haulers report hazard exposure; the insurer holds the covered amount."""
    pubs = ("hauler-1", "hauler-2", "insurer")
    total = Function.pipeline(Step(StepOp.LOAD, 0), Step(StepOp.ADD, 1))
    excess = Function.pipeline(Step(StepOp.LOAD, 0), Step(StepOp.ADD, 1), Step(StepOp.SUB, 2))

    def oracle(x: Inputs) -> dict[str, Fraction]:
        h = Fraction(x["hauler-1"]) + Fraction(x["hauler-2"])
        return {"total": h, "excess": h - Fraction(x["insurer"])}

    def summarize(ins: Mapping[str, Fraction]) -> str:
        return "exceeds coverage" if ins["excess"] > 0 else "within coverage"

    return Scenario(
        1,
        "HazmatInsurance",
        pubs,
        (QueryTask("total", total), QueryTask("excess", excess)),
        1,
        lambda rng: {**_ints(rng, pubs[:2], 0, 50), **_ints(rng, pubs[2:], 0, 100)},
        oracle,
        summarize,
    )


def shelf_life(scale: int = 100) -> Scenario:
    """Two temperature readings with two decimals: their product and their mean."""
    pubs = ("sensor-1", "sensor-2")

    def draw(rng: random.Random) -> dict[str, Decimal]:
        return {p: Decimal(rng.randint(-2000, 4000)).scaleb(-2) for p in pubs}

    def oracle(x: Inputs) -> dict[str, Fraction]:
        a, b = Fraction(x["sensor-1"]), Fraction(x["sensor-2"])
        return {"product": a * b, "sum": a + b}

    def summarize(ins: Mapping[str, Fraction]) -> str:
        return f"mean {float(ins['sum'] / 2):.2f}, product {float(ins['product']):.4f}"

    return Scenario(
        2,
        "ShelfLife",
        pubs,
        (QueryTask("product", Function.mul()), QueryTask("sum", Function.sum())),
        scale,
        draw,
        oracle,
        summarize,
    )


def price_analysis(weights: Sequence[int] = (1, 1, 1)) -> Scenario:
    """Three suppliers' costs, weighted, against the retailer's price."""
    pubs = ("supplier-1", "supplier-2", "supplier-3", "retailer")
    w = tuple(weights)
    if len(w) != 3:
        raise ConfigError("weights", "need one weight per supplier")
    cost = Function.pipeline(
        Step(StepOp.LOAD, 0, w[0]), Step(StepOp.ADD, 1, w[1]), Step(StepOp.ADD, 2, w[2])
    )
    margin = Function.pipeline(
        Step(StepOp.LOAD, 3),
        Step(StepOp.SUB, 0, w[0]),
        Step(StepOp.SUB, 1, w[1]),
        Step(StepOp.SUB, 2, w[2]),
    )

    def oracle(x: Inputs) -> dict[str, Fraction]:
        c = sum(wi * Fraction(x[p]) for wi, p in zip(w, pubs))
        return {"cost_total": c, "margin": Fraction(x["retailer"]) - c}

    def summarize(ins: Mapping[str, Fraction]) -> str:
        return "profitable" if ins["margin"] > 0 else "loss"

    return Scenario(
        3,
        "PriceAnalysis",
        pubs,
        (QueryTask("cost_total", cost), QueryTask("margin", margin)),
        1,
        lambda rng: {**_ints(rng, pubs[:3], 0, 100), **_ints(rng, pubs[3:], 0, 600)},
        oracle,
        summarize,
    )


def build_scenario(number: int, weights: Sequence[int] = (1, 1, 1)) -> Scenario:
    if number == 1:
        return hazmat_insurance()
    if number == 2:
        return shelf_life()
    if number == 3:
        return price_analysis(weights)
    raise ConfigError("scenario", f"unknown scenario {number}")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: int = 1
    mode: Mode = Mode.ZK
    runs: int = 1
    inter_task_ms: int = 5000
    seed: int = 0
    validators: int = 5
    threshold: int = 3
    block_period_ms: int = 1000
    refresh_ms: int = 300_000
    refresh_lead_blocks: int = 10
    byzantine_computers: int = 0
    computers: int | None = None
    computer_faults: Mapping[str, FaultMode] = field(default_factory=dict)
    faulty_validators: int = 0
    silent_validators: int = 0
    tampering_managers: tuple[str, ...] = ()
    weights: tuple[int, ...] = (1, 1, 1)
    inputs: tuple[Mapping[str, Decimal | int | str], ...] | None = None
    costs: CostModel = CostModel()
    he_params: HEParams = WIDE_HE_PARAMS
    first_release_ms: int | None = None

    def validate(self) -> None:
        if self.scenario not in (1, 2, 3):
            raise ConfigError("scenario", "must be 1, 2 or 3")
        if self.runs < 1:
            raise ConfigError("runs", "must be at least 1")
        for name in ("inter_task_ms", "block_period_ms", "refresh_ms", "validators", "threshold"):
            if getattr(self, name) <= 0:
                raise ConfigError(name, "must be positive")
        if self.threshold > self.validators:
            raise ConfigError("threshold", "cannot exceed the number of validators")
        pool = self.pool_size
        if not 0 <= self.byzantine_computers <= pool:
            raise ConfigError("byzantine_computers", f"must lie in [0, {pool}]")
        if self.inputs is not None and len(self.inputs) != self.runs:
            raise ConfigError("inputs", "one input set per run")

    @property
    def pool_size(self) -> int:
        return self.validators if self.computers is None else self.computers

    def system_config(self) -> SystemConfig:
        faults = dict(self.computer_faults)
        for i in range(1, self.byzantine_computers + 1):
            faults.setdefault(computer_id(i), FaultMode.BYZANTINE_FLIP)
        return SystemConfig(
            validators=self.validators,
            threshold=self.threshold,
            block_period_ms=self.block_period_ms,
            refresh_ms=self.refresh_ms,
            refresh_lead_blocks=self.refresh_lead_blocks,
            computers=self.pool_size,
            computer_faults=faults,
            faulty_validators=self.faulty_validators,
            silent_validators=self.silent_validators,
            tampering_managers=self.tampering_managers,
            plain=self.mode is Mode.PLAIN,
            seed=self.seed,
            he_params=self.he_params,
            costs=self.costs,
        )


@dataclass
class _Job:
    run: int
    release: int
    inputs: dict[str, Decimal]
    timestamps: list[int]
    task_ids: dict[str, bytes] = field(default_factory=dict)
    delivered: dict[str, tuple[int, Insight]] = field(default_factory=dict)
    verdicts: dict[str, str] = field(default_factory=dict)


class _Harness:
    def __init__(self, cfg: ScenarioConfig) -> None:
        cfg.validate()
        self.cfg = cfg
        self.scenario = build_scenario(cfg.scenario, cfg.weights)
        self.net = Network(cfg.system_config())
        self.query = self.scenario.query()
        self.net.add_query(self.query)
        self.net.on_outcome = self._on_outcome
        self.net.on_requeue = self._on_requeue
        self.net.bus.subscribe("subscriber", TO_SUBSCRIBER, self._on_insight)
        self.jobs: dict[int, _Job] = {}
        self.by_ts: dict[int, _Job] = {}
        rng = seeded_rng("inputs", cfg.seed, cfg.scenario)
        first = cfg.first_release_ms if cfg.first_release_ms is not None else cfg.block_period_ms
        for run in range(cfg.runs):
            drawn = self.scenario.draw(rng)
            if cfg.inputs is not None:
                drawn = {p: Decimal(str(v)) for p, v in cfg.inputs[run].items()}
            release = first + run * cfg.inter_task_ms
            job = _Job(run, release, drawn, [release])
            self.jobs[run] = job
            self.by_ts[release] = job
            self.net.sim.schedule(release, self._release, job, release)

    @property
    def total_tasks(self) -> int:
        return len(self.jobs) * len(self.query.tasks)

    def _resolved(self, job: _Job) -> bool:
        return all(t.name in job.delivered or t.name in job.verdicts for t in self.query.tasks)

    def done(self) -> bool:
        return all(self._resolved(j) for j in self.jobs.values())

    def _plaintext(self, value: Decimal) -> Plaintext:
        return encode_fixed(value, self.query.scale, self.net.he_params.plaintext_modulus)

    def _release(self, job: _Job, ts: int) -> None:
        for p in self.query.publishers:
            self.net.publishers[p].release(self.query.function_tag, ts, self._plaintext(job.inputs[p]))

    def _on_outcome(self, task_id: bytes, name: str, tag: int, job_ts: int, verdict: str) -> None:
        job = self.by_ts.get(job_ts)
        if job is not None and name not in job.delivered:
            job.verdicts.setdefault(name, verdict)
            job.task_ids.setdefault(name, task_id)

    def _on_requeue(self, tag: int, job_ts: int, name: str) -> None:
        job = self.by_ts.get(job_ts)
        if job is None or job_ts != job.timestamps[-1]:
            return
        ts = self.net.sim.now
        while ts in self.by_ts:
            ts += 1
        job.timestamps.append(ts)
        self.by_ts[ts] = job
        self._release(job, ts)

    def _on_insight(self, env: MessageEnvelope) -> None:
        taint.check(Site.SUBSCRIBER, env)
        insight = Insight.from_bytes(env.body)
        job = self.by_ts.get(insight.job_timestamp)
        if job is None or insight.name in job.delivered:
            return  # duplicate delivery after a requeue
        job.delivered[insight.name] = (self.net.sim.now, insight)
        job.task_ids[insight.name] = insight.task_id

    def run(self) -> None:
        cfg = self.cfg
        last = max(j.release for j in self.jobs.values())
        horizon = last + 200 * cfg.block_period_ms + cfg.refresh_ms
        self.net.sim.run(until=horizon, stop=self.done)

    def report(self, violations: int, checks: int) -> MetricsReport:
        cfg = self.cfg
        rep = MetricsReport(self.scenario.name, cfg.mode.value, cfg.inter_task_ms)
        for run, job in sorted(self.jobs.items()):
            expected = self.scenario.oracle(job.inputs)
            values = {}
            for qt in self.query.tasks:
                key = (run, qt.name)
                rep.expected[key] = expected[qt.name]
                tid = job.task_ids.get(qt.name, b"").hex()
                if qt.name in job.delivered:
                    at, insight = job.delivered[qt.name]
                    rep.insights[key] = insight.value
                    values[qt.name] = insight.value
                    rep.records.append(
                        TaskRecord(rep.scenario, rep.mode, cfg.inter_task_ms, run, qt.name, tid, job.release, at, insight.verdict)
                    )
                else:
                    verdict = job.verdicts.get(qt.name, "Incomplete")
                    rep.records.append(
                        TaskRecord(rep.scenario, rep.mode, cfg.inter_task_ms, run, qt.name, tid, job.release, None, verdict)
                    )
            if len(values) == len(self.query.tasks):
                rep.summaries[run] = self.scenario.summarize(values)
        net = self.net
        rep.counters = dict(sorted(net.counters.items()))
        rep.node_busy_ms = {f"q{i}": q.busy_ms for i, q in enumerate(net.queues)}
        rep.credit_rejections = net.bus.rate_limited
        rep.taint_checks = checks
        rep.taint_violations = violations
        rep.ledger_lines = net.ledger.dump_lines()
        rep.ledger_digest = net.ledger.state_digest()
        rep.event_log = net.event_log()
        return rep


def run_scenario(cfg: ScenarioConfig, *, harness_out: list | None = None) -> MetricsReport:
    """Execute every run of ``cfg`` on a fresh network; raises TaintViolation on a leak."""
    h = _Harness(cfg)
    if harness_out is not None:
        harness_out.append(h)
    if cfg.mode is Mode.ZK:
        monitor = TaintMonitor()
        with monitor.active():
            h.run()
        return h.report(len(monitor.violations), sum(monitor.checks.values()))
    h.run()
    return h.report(0, 0)


@dataclass
class SweepReport:
    reports: dict[tuple[int, Mode], MetricsReport]

    def overhead_ratio(self, period_ms: int) -> float:
        return self.reports[(period_ms, Mode.ZK)].mean_delay / self.reports[(period_ms, Mode.PLAIN)].mean_delay

    def ordered(self) -> list[MetricsReport]:
        return [self.reports[k] for k in sorted(self.reports, key=lambda k: (k[0], k[1].value))]


def run_sweep(
    base: ScenarioConfig,
    periods_ms: Sequence[int] = SWEEP_PERIODS_MS,
    modes: Sequence[Mode] = (Mode.ZK, Mode.PLAIN),
) -> SweepReport:
    if not periods_ms:
        raise ConfigError("periods", "need at least one inter-task period")
    reports = {}
    for period in periods_ms:
        for mode in modes:
            reports[(period, mode)] = run_scenario(replace(base, inter_task_ms=period, mode=mode))
    return SweepReport(reports)


def timing_bench(iterations: int = 100, seed: int = 0) -> tuple[float, float]:
    """Wall-clock means, in ms, of a 3-of-5 split and of a 3-share reconstruction."""
    cfg = ThresholdConfig(5, 3)
    rng = random.Random(seed)
    keygen_total = recon_total = 0.0
    for i in range(iterations):
        secret = rng.getrandbits(120)
        t0 = time.perf_counter()
        shares, _ = split_secret(secret, cfg, i)
        t1 = time.perf_counter()
        got = reconstruct_secret(shares[:3], 3)
        t2 = time.perf_counter()
        if got != secret:
            raise AssertionError("benchmark reconstruction mismatch")
        keygen_total += t1 - t0
        recon_total += t2 - t1
    return keygen_total * 1000 / iterations, recon_total * 1000 / iterations
