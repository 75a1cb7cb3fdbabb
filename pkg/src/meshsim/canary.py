"""Canary comparison: error-rate and latency regression checks, fail-closed."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Tuple

from .metrics import MetricsWindow

REASON_ERROR_RATE = "error-rate-regression"
REASON_LATENCY = "latency-regression"
REASON_SAMPLES = "insufficient-samples"


@dataclass
class CanaryPolicy:
    initial_percents: Tuple[int, ...] = (1, 10)
    min_samples: int = 100
    error_delta_abs: float = 0.005
    latency_quantile: float = 0.99
    latency_delta_rel: float = 0.2
    significance: float = 3.0


@dataclass
class WindowStats:
    n: int
    errors: int
    latency_quantile: float

    @property
    def error_rate(self) -> float:
        return self.errors / self.n if self.n else 0.0


@dataclass
class CanaryVerdict:
    passed: bool
    reasons: List[str] = field(default_factory=list)
    canary_stats: WindowStats = field(default_factory=lambda: WindowStats(0, 0, 0.0))
    baseline_stats: WindowStats = field(default_factory=lambda: WindowStats(0, 0, 0.0))
    z_score: float = 0.0


def two_proportion_z(errors_a: int, n_a: int, errors_b: int, n_b: int) -> float:
    """Pooled two-proportion z statistic for error rates (a minus b)."""
    if n_a == 0 or n_b == 0:
        return 0.0
    p_a = errors_a / n_a
    p_b = errors_b / n_b
    pooled = (errors_a + errors_b) / (n_a + n_b)
    se = math.sqrt(pooled * (1 - pooled) * (1 / n_a + 1 / n_b))
    if se == 0.0:
        return 0.0 if p_a == p_b else math.inf
    return (p_a - p_b) / se


def evaluate_canary(canary: MetricsWindow, baseline: MetricsWindow, policy: CanaryPolicy) -> CanaryVerdict:
    """Compare a canary window against the current release's window.

    Fails when the error-rate increase is both statistically significant and
    above the absolute floor, or when the latency quantile regresses beyond
    the relative threshold. Too few samples on either side fails closed.
    """
    q = policy.latency_quantile
    c_stats = WindowStats(canary.n, canary.errors, canary.latency_quantile(q))
    b_stats = WindowStats(baseline.n, baseline.errors, baseline.latency_quantile(q))
    reasons: List[str] = []

    if canary.n < policy.min_samples or baseline.n < policy.min_samples:
        return CanaryVerdict(False, [REASON_SAMPLES], c_stats, b_stats)

    z = two_proportion_z(canary.errors, canary.n, baseline.errors, baseline.n)
    delta = c_stats.error_rate - b_stats.error_rate
    if z > policy.significance and delta > policy.error_delta_abs:
        reasons.append(REASON_ERROR_RATE)

    if c_stats.latency_quantile > b_stats.latency_quantile * (1 + policy.latency_delta_rel):
        reasons.append(REASON_LATENCY)

    return CanaryVerdict(not reasons, reasons, c_stats, b_stats, z_score=z)
