"""Budget clocks. The search loop only ever asks how much time has been used."""

from __future__ import annotations

import threading
import time


class SimClock:
    """Simulated time: advances only when something is charged to it."""

    def __init__(self):
        self._t = 0.0
        self._lock = threading.Lock()

    def elapsed(self) -> float:
        return self._t

    def charge(self, dt: float) -> None:
        if dt < 0:
            raise ValueError("cannot charge negative time")
        with self._lock:
            self._t += dt


class WallClock:
    """Wall-clock time since construction; charges are no-ops because real time passes anyway."""

    def __init__(self, now=time.monotonic):
        self._now = now
        self._start = now()

    def elapsed(self) -> float:
        return self._now() - self._start

    def charge(self, dt: float) -> None:
        pass
