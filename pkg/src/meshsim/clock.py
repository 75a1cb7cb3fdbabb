"""Virtual tick clock. One tick is one simulated second; nothing reads wall time."""

from __future__ import annotations

TICKS_PER_MINUTE = 60
TICKS_PER_HOUR = 3600
TICKS_PER_DAY = 86400


class VirtualClock:
    def __init__(self, start: int = 0):
        self._now = start
        self._listeners = []

    @property
    def now(self) -> int:
        return self._now

    @property
    def day(self) -> int:
        return self._now // TICKS_PER_DAY

    def advance(self, ticks: int = 1) -> int:
        if ticks < 0:
            raise ValueError("clock only moves forward")
        self._now += ticks
        for fn in self._listeners:
            fn(self._now)
        return self._now

    def on_advance(self, fn) -> None:
        """Register a callback invoked with the new tick after every advance."""
        self._listeners.append(fn)
