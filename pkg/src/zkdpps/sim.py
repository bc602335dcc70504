"""Discrete-event scheduler on an integer millisecond clock."""

from __future__ import annotations

import heapq
import itertools
from typing import Any, Callable

# Lower runs first among events due at the same instant.
PRIORITY_BLOCK = 0
PRIORITY_DEFAULT = 1


class Simulator:
    def __init__(self, start: int = 0) -> None:
        self.now = start
        self._queue: list[tuple[int, int, int, Callable[..., Any], tuple]] = []
        self._seq = itertools.count()

    def schedule(self, at: int, fn: Callable[..., Any], *args: Any, priority: int = PRIORITY_DEFAULT) -> None:
        if at < self.now:
            raise ValueError(f"cannot schedule in the past ({at} < {self.now})")
        heapq.heappush(self._queue, (at, priority, next(self._seq), fn, args))

    def pending(self) -> int:
        return len(self._queue)

    def step(self) -> bool:
        if not self._queue:
            return False
        at, _, _, fn, args = heapq.heappop(self._queue)
        self.now = at
        fn(*args)
        return True

    def run(self, until: int | None = None, stop: Callable[[], bool] | None = None) -> None:
        while self._queue:
            if until is not None and self._queue[0][0] > until:
                break
            if stop is not None and stop():
                return
            self.step()
        if until is not None:
            self.now = max(self.now, until)


class ServiceQueue:
    """Single-server FIFO: models a node that does one piece of work at a time."""

    def __init__(self, sim: Simulator) -> None:
        self.sim = sim
        self.busy_until = sim.now
        self.busy_ms = 0

    def submit(self, cost_ms: int, fn: Callable[..., Any], *args: Any) -> int:
        start = max(self.sim.now, self.busy_until)
        finish = start + cost_ms
        self.busy_until = finish
        self.busy_ms += cost_ms
        self.sim.schedule(finish, fn, *args)
        return finish
