"""In-process topic bus with credit-based publication.

Topics are the closed set routed by the middleware. Delivery is scheduled
on the simulator so that a handler never runs inside another node's
handler, and every subscriber of a topic sees envelopes in publish order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable

from . import taint
from .encoding import Writer, digest
from .errors import BadTopic
from .sim import Simulator
from .taint import Origin, Site

TO_PPSM = "To-PPSM"
TO_ALLOCATE = "To-Allocate"
TO_COMPUTE = "To-Compute"
RESULTS = "Results"
TO_DECRYPT = "To-Decrypt"
TO_SUBSCRIBER = "To-Subscriber"

TOPICS = frozenset({TO_PPSM, TO_ALLOCATE, TO_COMPUTE, RESULTS, TO_DECRYPT, TO_SUBSCRIBER})


def envelope_bytes(topic: str, timestamp: int, publisher_id: str, body: bytes, function_tag: int) -> bytes:
    return (
        Writer()
        .text(topic)
        .u64(timestamp)
        .text(publisher_id)
        .blob(body)
        .u8(function_tag)
        .getvalue()
    )


@dataclass(frozen=True)
class MessageEnvelope:
    topic: str
    publisher_id: str
    timestamp: int
    body: bytes = field(repr=False)
    function_tag: int = 0
    serialized_hash: bytes = field(default=b"", repr=False)
    seq: int = 0
    # Set only when the body carries a plaintext (plain mode, insight delivery).
    taint: Origin | None = None

    def canonical(self) -> bytes:
        return envelope_bytes(self.topic, self.timestamp, self.publisher_id, self.body, self.function_tag)

    def sealed(self) -> "MessageEnvelope":
        return replace(self, serialized_hash=compute_envelope_hash(self))


def compute_envelope_hash(env: MessageEnvelope) -> bytes:
    return digest(env.canonical())


class PublishStatus(enum.Enum):
    ACCEPTED = "Accepted"
    RATE_LIMITED = "RateLimited"
    BAD_TOPIC = "BadTopic"


@dataclass
class CreditAccount:
    """Token bucket in virtual time; ``tokens`` is kept exact as a Fraction."""

    publisher_id: str
    capacity: int = 5
    refill_rate: Fraction = Fraction(1)  # tokens per second
    tokens: Fraction = Fraction(-1)
    updated_at: int = 0

    def __post_init__(self) -> None:
        self.refill_rate = Fraction(self.refill_rate)
        if self.tokens < 0:
            self.tokens = Fraction(self.capacity)

    def _refill(self, now: int) -> None:
        if now > self.updated_at:
            gained = self.refill_rate * (now - self.updated_at) / 1000
            self.tokens = min(Fraction(self.capacity), self.tokens + gained)
            self.updated_at = now

    def try_consume(self, now: int) -> bool:
        self._refill(now)
        if self.tokens >= 1:
            self.tokens -= 1
            return True
        return False

    def next_token_at(self, now: int) -> int:
        self._refill(now)
        if self.tokens >= 1:
            return now
        if self.refill_rate <= 0:
            raise ValueError("bucket never refills")
        missing_ms = (1 - self.tokens) * 1000 / self.refill_rate
        return now + int(-(-missing_ms // 1))


@dataclass(frozen=True)
class Subscription:
    node_id: str
    topic: str


Handler = Callable[[MessageEnvelope], None]


class PubSubBus:
    def __init__(self, sim: Simulator, latency_ms: int = 0) -> None:
        self.sim = sim
        self.latency_ms = latency_ms
        self._subs: dict[str, dict[str, Handler]] = {t: {} for t in TOPICS}
        self._seq: dict[str, int] = {}
        self.accounts: dict[str, CreditAccount] = {}
        self.rate_limited = 0
        self.published: dict[str, int] = {t: 0 for t in TOPICS}
        # Test hook: rewrite an envelope on its way to one subscriber.
        self.interceptor: Callable[[str, MessageEnvelope], MessageEnvelope] | None = None

    def register_publisher(self, publisher_id: str, capacity: int = 5, refill_rate: float | Fraction = 1) -> CreditAccount:
        acct = CreditAccount(publisher_id, capacity, Fraction(refill_rate), updated_at=self.sim.now)
        self.accounts[publisher_id] = acct
        return acct

    def subscribe(self, node_id: str, topic: str, handler: Handler) -> Subscription:
        if topic not in TOPICS:
            raise BadTopic(topic)
        # Re-subscribing keeps the original handler.
        self._subs[topic].setdefault(node_id, handler)
        return Subscription(node_id, topic)

    def subscribers(self, topic: str) -> list[str]:
        return list(self._subs.get(topic, {}))

    def publish(self, env: MessageEnvelope) -> PublishStatus:
        if env.topic not in TOPICS:
            return PublishStatus.BAD_TOPIC
        taint.check(Site.DELIVER if env.topic == TO_SUBSCRIBER else Site.BUS, env)
        acct = self.accounts.get(env.publisher_id)
        if acct is not None and not acct.try_consume(self.sim.now):
            self.rate_limited += 1
            return PublishStatus.RATE_LIMITED
        seq = self._seq.get(env.publisher_id, 0)
        self._seq[env.publisher_id] = seq + 1
        env = replace(env, seq=seq)
        if not env.serialized_hash:
            env = env.sealed()
        self.published[env.topic] += 1
        for node_id, handler in list(self._subs[env.topic].items()):
            delivered = self.interceptor(node_id, env) if self.interceptor else env
            self.sim.schedule(self.sim.now + self.latency_ms, handler, delivered)
        return PublishStatus.ACCEPTED

    def next_token_at(self, publisher_id: str) -> int:
        acct = self.accounts.get(publisher_id)
        return self.sim.now if acct is None else acct.next_token_at(self.sim.now)
