"""Simulated clocks: wall-anchored compressed time and scheduler-stepped time."""

from __future__ import annotations

import threading
import time


class SimClock:
    """Wall-driven sim clock: sim time advances `compression` times wall rate.

    compression = 1 reproduces wall time. now() is monotone non-decreasing
    (anchored on the monotonic clock, immune to wall clock steps).
    """

    def __init__(self, start: float, compression: float = 1.0):
        if compression <= 0:
            raise ValueError("compression must be positive")
        self.start = float(start)
        self.compression = float(compression)
        self.epoch_start = time.time()
        self._anchor = time.monotonic()
        self._lock = threading.Lock()
        self._last = self.start

    def now(self) -> float:
        with self._lock:
            t = self.start + (time.monotonic() - self._anchor) * self.compression
            if t < self._last:  # pragma: no cover - monotonic() never regresses
                t = self._last
            self._last = t
            return t

    def wait_until(self, t: float, stop: threading.Event | None = None) -> None:
        """Sleep until sim time t; returns early if `stop` is set."""
        while True:
            delta = (t - self.now()) / self.compression
            if delta <= 0:
                return
            if stop is None:
                time.sleep(min(delta, 0.2))
            elif stop.wait(min(delta, 0.2)):
                return


class SteppedClock:
    """Logically-stepped clock owned by the event scheduler.

    Time only moves via advance_to(), so work done between steps happens at
    a frozen instant regardless of wall time. Two runs that advance through
    the same instants read identical timestamps.
    """

    def __init__(self, start: float):
        self._now = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def advance_to(self, t: float) -> None:
        with self._lock:
            if t < self._now:
                raise ValueError(f"clock regression: {t} < {self._now}")
            self._now = t

    def wait_until(self, t: float, stop: threading.Event | None = None) -> None:
        if stop is not None and stop.is_set():
            return
        self.advance_to(max(t, self.now()))
