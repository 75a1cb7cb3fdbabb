"""Error budget: allowed unreliability under the SLO, computed exactly with rationals."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Union

from .clock import TICKS_PER_MINUTE
from .metrics import MetricsWindow

SloLike = Union[Fraction, str, float, int]


def _as_fraction(slo: SloLike) -> Fraction:
    # Floats go through str() so 0.9995 means the decimal 0.9995, not its
    # binary approximation; budget arithmetic must be exact.
    if isinstance(slo, Fraction):
        return slo
    return Fraction(str(slo))


@dataclass
class ErrorBudget:
    slo: Fraction
    window_ticks: int
    allowed_error_ticks: Fraction
    consumed_ticks: int
    depleted: bool

    @property
    def allowed_error_minutes(self) -> Fraction:
        return self.allowed_error_ticks / TICKS_PER_MINUTE

    @property
    def consumed_minutes(self) -> Fraction:
        return Fraction(self.consumed_ticks, TICKS_PER_MINUTE)

    @property
    def remaining_ticks(self) -> Fraction:
        return self.allowed_error_ticks - self.consumed_ticks


def check_error_budget(series: Iterable[MetricsWindow], slo: SloLike, window_ticks: int) -> ErrorBudget:
    """Consume one tick of budget for every tick whose error rate breached 1-SLO.

    `series` is per-tick (or coarser) production windows covering at most the
    budget window; a breached multi-tick window consumes its whole span.
    """
    slo_frac = _as_fraction(slo)
    if not 0 < slo_frac <= 1:
        raise ValueError("slo must be within (0, 1]")
    threshold = 1 - slo_frac
    consumed = 0
    for win in series:
        if win.n == 0:
            continue
        if Fraction(win.errors, win.n) > threshold:
            consumed += max(1, win.to_tick - win.from_tick)
    allowed = window_ticks * threshold
    return ErrorBudget(
        slo=slo_frac,
        window_ticks=window_ticks,
        allowed_error_ticks=allowed,
        consumed_ticks=consumed,
        depleted=consumed >= allowed,
    )
