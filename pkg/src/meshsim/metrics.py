"""Per-deploy request metrics: counts, errors, and a fixed-bucket latency histogram."""

from __future__ import annotations

import math
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

BUCKET_WIDTH_MS = 1.0


class LatencyHistogram:
    """Sparse fixed-width histogram; quantiles resolve to a bucket upper edge."""

    def __init__(self, counts: Optional[Counter] = None):
        self.counts: Counter = counts if counts is not None else Counter()

    def add(self, latency_ms: float) -> None:
        self.counts[int(latency_ms // BUCKET_WIDTH_MS)] += 1

    def merge(self, other: "LatencyHistogram") -> None:
        self.counts.update(other.counts)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def quantile(self, q: float) -> float:
        """Upper edge of the bucket containing the q-quantile; 0 when empty."""
        total = self.total
        if total == 0:
            return 0.0
        rank = max(1, math.ceil(q * total))
        seen = 0
        for bucket in sorted(self.counts):
            seen += self.counts[bucket]
            if seen >= rank:
                return (bucket + 1) * BUCKET_WIDTH_MS
        return (max(self.counts) + 1) * BUCKET_WIDTH_MS


@dataclass
class MetricsWindow:
    """Aggregated request metrics for one deploy over [from_tick, to_tick)."""

    deploy_id: str
    from_tick: int
    to_tick: int
    n: int = 0
    errors: int = 0
    histogram: LatencyHistogram = field(default_factory=LatencyHistogram)

    @property
    def error_rate(self) -> float:
        return self.errors / self.n if self.n else 0.0

    def latency_quantile(self, q: float) -> float:
        return self.histogram.quantile(q)


class _TickAgg:
    __slots__ = ("n", "errors", "counts")

    def __init__(self):
        self.n = 0
        self.errors = 0
        self.counts: Counter = Counter()


class MetricsRecorder:
    """Thread-safe accumulator keyed by (deploy, tick).

    Only production traffic feeds this recorder: canary verdicts and the
    error budget compare production behavior, and injected test-traffic
    failures must not taint them.
    """

    def __init__(self):
        self._data: Dict[str, Dict[int, _TickAgg]] = {}
        self._lock = threading.Lock()

    def record(self, deploy_id: str, tick: int, latency_ms: float, error: bool) -> None:
        with self._lock:
            agg = self._data.setdefault(deploy_id, {}).setdefault(tick, _TickAgg())
            agg.n += 1
            if error:
                agg.errors += 1
            agg.counts[int(latency_ms // BUCKET_WIDTH_MS)] += 1

    def deploys(self) -> List[str]:
        return list(self._data)

    def window(self, deploy_id: str, from_tick: int, to_tick: int) -> MetricsWindow:
        """Aggregate one deploy over [from_tick, to_tick)."""
        win = MetricsWindow(deploy_id=deploy_id, from_tick=from_tick, to_tick=to_tick)
        with self._lock:
            for tick, agg in self._data.get(deploy_id, {}).items():
                if from_tick <= tick < to_tick:
                    win.n += agg.n
                    win.errors += agg.errors
                    win.histogram.counts.update(agg.counts)
        return win

    def tick_series(
        self, from_tick: int, to_tick: int, deploy_ids: Optional[Iterable[str]] = None
    ) -> List[MetricsWindow]:
        """One aggregated window per tick with traffic, across the given deploys."""
        ids = list(deploy_ids) if deploy_ids is not None else self.deploys()
        merged: Dict[int, MetricsWindow] = {}
        with self._lock:
            for deploy_id in ids:
                for tick, agg in self._data.get(deploy_id, {}).items():
                    if not from_tick <= tick < to_tick:
                        continue
                    win = merged.get(tick)
                    if win is None:
                        win = merged[tick] = MetricsWindow(deploy_id="*", from_tick=tick, to_tick=tick + 1)
                    win.n += agg.n
                    win.errors += agg.errors
                    win.histogram.counts.update(agg.counts)
        return [merged[t] for t in sorted(merged)]
