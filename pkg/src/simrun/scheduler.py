"""Deterministic discrete-event scheduler.

The simulation clock advances through a rolling window of triggers.  A
trigger is delivered to its target actor when it falls inside the
half-open window ``[lower, lower + window_size)``; the actor must answer
with a :class:`CompletionNotice` before the window can close over the
trigger's time.  Delivery order is a total order on ``(time, id)``, so a
run is reproducible byte for byte.
"""

from __future__ import annotations

import heapq
import time as _wallclock
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable


class PastTime(Exception):
    """A trigger was scheduled before the window lower bound."""


class UnknownTrigger(Exception):
    """A completion notice referenced a trigger that is not open."""


class StuckSimulation(Exception):
    """The window cannot advance because completions were withheld."""

    def __init__(self, open_triggers):
        self.open_triggers = open_triggers
        detail = ", ".join(
            f"(actor={a!r}, trigger={i}, time={t:g})" for a, i, t in open_triggers
        )
        super().__init__(f"simulation stuck; open triggers: {detail}")


@dataclass(frozen=True)
class Trigger:
    id: int
    time: float
    target: Any
    payload: Any = None

    def sort_key(self):
        return (self.time, self.id)


@dataclass
class CompletionNotice:
    trigger_id: int
    new_triggers: list = field(default_factory=list)  # (time, target, payload) tuples


# Sentinel a handler may return to withhold its completion (testing stuck paths).
WITHHOLD = object()


class Scheduler:
    def __init__(self, window_size: float = 60.0, stuck_wall_timeout: float = 30.0):
        self.window_size = float(window_size)
        self.stuck_wall_timeout = float(stuck_wall_timeout)
        self.lower = 0.0
        self._queue: list[tuple[float, int, Trigger]] = []
        self._open: dict[int, Trigger] = {}
        self._next_id = 0
        self._delivered_times: list[float] = []
        self._counts = {"scheduled": 0, "delivered": 0, "completed": 0}
        self._last_progress_wall = _wallclock.monotonic()

    # -- bookkeeping -------------------------------------------------------

    @property
    def upper(self) -> float:
        return self.lower + self.window_size

    def counts(self) -> dict[str, int]:
        return dict(self._counts)

    def queued_count(self) -> int:
        return len(self._queue)

    def open_count(self) -> int:
        return len(self._open)

    # -- core protocol -----------------------------------------------------

    def schedule(self, time: float, target: Any, payload: Any = None) -> int:
        """Enqueue a trigger; returns its id.  Raises PastTime if ``time``
        is before the window lower bound (an agent logic bug)."""
        if time < self.lower:
            raise PastTime(
                f"trigger for {target!r} at t={time:g} is before window lower bound {self.lower:g}"
            )
        trig = Trigger(self._next_id, float(time), target, payload)
        self._next_id += 1
        heapq.heappush(self._queue, (trig.time, trig.id, trig))
        self._counts["scheduled"] += 1
        return trig.id

    def _refresh_lower(self) -> None:
        candidates = []
        if self._open:
            candidates.append(min(t.time for t in self._open.values()))
        if self._queue:
            candidates.append(self._queue[0][0])
        if candidates:
            new_lower = min(candidates)
            if new_lower > self.lower:
                self.lower = new_lower
                self._last_progress_wall = _wallclock.monotonic()

    def advance(self) -> list[Trigger]:
        """Deliver every queued trigger inside the current window, in
        (time, id) order.  No-op (empty list) when nothing is deliverable."""
        self._refresh_lower()
        delivered = []
        while self._queue and self._queue[0][0] < self.upper:
            _, _, trig = heapq.heappop(self._queue)
            self._open[trig.id] = trig
            self._delivered_times.append(trig.time)
            self._counts["delivered"] += 1
            delivered.append(trig)
        if delivered:
            self._last_progress_wall = _wallclock.monotonic()
        return delivered

    def complete(self, notice: CompletionNotice) -> None:
        """Close an open trigger, scheduling its follow-up triggers
        atomically (either all are accepted or none)."""
        if notice.trigger_id not in self._open:
            raise UnknownTrigger(f"trigger {notice.trigger_id} is not open")
        for time, target, _payload in notice.new_triggers:
            if time < self.lower:
                raise PastTime(
                    f"follow-up trigger for {target!r} at t={time:g} precedes lower bound {self.lower:g}"
                )
        del self._open[notice.trigger_id]
        for time, target, payload in notice.new_triggers:
            self.schedule(time, target, payload)
        self._counts["completed"] += 1
        self._last_progress_wall = _wallclock.monotonic()

    def detect_stuck(self, wall_timeout: float | None = None) -> list[tuple]:
        """Report open triggers when no progress happened within the
        wall-clock timeout, sorted by (time, id)."""
        timeout = self.stuck_wall_timeout if wall_timeout is None else wall_timeout
        if _wallclock.monotonic() - self._last_progress_wall < timeout:
            return []
        return self._stuck_report()

    def _stuck_report(self) -> list[tuple]:
        return [
            (t.target, t.id, t.time)
            for t in sorted(self._open.values(), key=Trigger.sort_key)
        ]

    # -- sequential-deterministic engine -----------------------------------

    def run(self, handler: Callable[[Trigger], Any]) -> list[float]:
        """Drive the queue to exhaustion, handling one trigger at a time in
        (time, id) order.

        ``handler(trigger)`` returns an iterable of (time, target, payload)
        follow-up triggers (or None), or WITHHOLD to leave the trigger open.
        Handlers may also call :meth:`schedule` directly.  Raises
        :class:`StuckSimulation` when withheld completions block the window.

        Returns the delivered time sequence for determinism checks.
        """
        while True:
            self._refresh_lower()
            if not self._queue:
                if self._open:
                    raise StuckSimulation(self._stuck_report())
                break
            head_time = self._queue[0][0]
            if head_time >= self.upper:
                # Window blocked by a withheld completion: in sequential
                # mode no progress is possible, so report immediately.
                raise StuckSimulation(self._stuck_report())
            _, _, trig = heapq.heappop(self._queue)
            self._open[trig.id] = trig
            self._delivered_times.append(trig.time)
            self._counts["delivered"] += 1
            result = handler(trig)
            if result is WITHHOLD:
                continue
            new = list(result) if result is not None else []
            self.complete(CompletionNotice(trig.id, new))
        return list(self._delivered_times)


class ActorRegistry:
    """Routes triggers to per-actor handlers for Scheduler.run."""

    def __init__(self):
        self._handlers: dict[Any, Callable] = {}

    def register(self, actor_id: Any, handler: Callable) -> None:
        self._handlers[actor_id] = handler

    def __call__(self, trigger: Trigger):
        try:
            handler = self._handlers[trigger.target]
        except KeyError:
            raise KeyError(f"no actor registered for target {trigger.target!r}")
        return handler(trigger)
