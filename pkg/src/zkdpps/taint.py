"""Plaintext provenance tracking.

Every :class:`~zkdpps.he.Plaintext` carries an :class:`Origin`. While a
:class:`TaintMonitor` is active (ZK-mode runs), components report the sites
they pass plaintext-bearing objects through and the monitor raises
:class:`~zkdpps.errors.TaintViolation` on anything outside the permitted
holders: publishers keep their own readings, and decrypted values exist
only inside the reconstruction quorum and the delivery step.
"""

from __future__ import annotations

import contextlib
import contextvars
import enum
from collections import Counter
from typing import Any, Iterator

from .errors import TaintViolation


class Origin(enum.Enum):
    PUBLISHER_LOCAL = "PublisherLocal"
    QUORUM_DECRYPTED = "QuorumDecrypted"


class Site(str, enum.Enum):
    PUBLISHER = "publisher"
    BUS = "bus"
    LEDGER = "ledger"
    COMPUTER = "computer"
    PPSM = "ppsm"
    COLLABORATIVE_DECRYPT = "collaborative_decrypt"
    DELIVER = "deliver"
    SUBSCRIBER = "subscriber"


# Which origins may be held at which site.
ALLOWED: dict[Site, frozenset[Origin]] = {
    Site.PUBLISHER: frozenset({Origin.PUBLISHER_LOCAL}),
    Site.BUS: frozenset(),
    Site.LEDGER: frozenset(),
    Site.COMPUTER: frozenset(),
    Site.PPSM: frozenset(),
    Site.COLLABORATIVE_DECRYPT: frozenset({Origin.QUORUM_DECRYPTED}),
    Site.DELIVER: frozenset({Origin.QUORUM_DECRYPTED}),
    Site.SUBSCRIBER: frozenset({Origin.QUORUM_DECRYPTED}),
}

_monitor: contextvars.ContextVar["TaintMonitor | None"] = contextvars.ContextVar(
    "taint_monitor", default=None
)
_site: contextvars.ContextVar[Site | None] = contextvars.ContextVar("taint_site", default=None)


def _origins(obj: Any, depth: int = 0) -> Iterator[Origin]:
    if depth > 6:
        return
    origin = getattr(obj, "taint", None)
    if isinstance(origin, Origin):
        yield origin
    if isinstance(obj, (str, bytes, int, float)) or obj is None:
        return
    if isinstance(obj, dict):
        for v in obj.values():
            yield from _origins(v, depth + 1)
    elif isinstance(obj, (list, tuple, set, frozenset)):
        for v in obj:
            yield from _origins(v, depth + 1)


class TaintMonitor:
    def __init__(self) -> None:
        self.checks: Counter[str] = Counter()
        self.violations: list[str] = []

    def check(self, site: Site, obj: Any) -> None:
        self.checks[site.value] += 1
        for origin in _origins(obj):
            if origin not in ALLOWED[site]:
                msg = f"{origin.value} plaintext reached {site.value}"
                self.violations.append(msg)
                raise TaintViolation(msg)

    def check_decrypt(self) -> None:
        site = _site.get()
        self.checks["decrypt"] += 1
        if site is not Site.COLLABORATIVE_DECRYPT:
            msg = f"decrypt called outside the quorum context (site={site and site.value})"
            self.violations.append(msg)
            raise TaintViolation(msg)

    @contextlib.contextmanager
    def active(self) -> Iterator["TaintMonitor"]:
        token = _monitor.set(self)
        try:
            yield self
        finally:
            _monitor.reset(token)


def current() -> TaintMonitor | None:
    return _monitor.get()


def check(site: Site, obj: Any) -> None:
    m = _monitor.get()
    if m is not None:
        m.check(site, obj)


def guard_decrypt() -> None:
    m = _monitor.get()
    if m is not None:
        m.check_decrypt()


@contextlib.contextmanager
def at_site(site: Site) -> Iterator[None]:
    token = _site.set(site)
    try:
        yield
    finally:
        _site.reset(token)
