"""Daily quantile threshold and per-key control bounds.

The day's threshold t is a nearest-rank quantile of the current matrix
cells at or above the eligibility threshold th. Bounds around the moving
average combine t with a 3-sigma band: the upper bound is
ma + max(t, 3*sd); the lower bound is min(ma - t, ma - 3*sd, 0) in
``paper_literal`` mode and max(min(ma - t, ma - 3*sd), 0) in ``clamped``
mode. The literal lower bound is never positive, so on count data it can
never fire; clamped mode (the default) restores drop detection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .core import FlowKey, SparseOdm
from .rolling import RollingStats

BOUNDS_MODES = ("clamped", "paper_literal")


@dataclass(frozen=True)
class ThresholdSet:
    """The day's quantile threshold plus the configuration that produced it.

    ``degenerate`` marks a window where no cell reached th, in which case t
    falls back to th itself.
    """

    th: int
    q: float
    t: float
    eligible_count: int
    degenerate: bool = False


@dataclass(frozen=True)
class Bounds:
    key: FlowKey
    lower: float
    upper: float
    mode: str


def nearest_rank(q: float, n: int) -> int:
    """1-based nearest-rank index: ceil(q*n), computed exactly.

    The float q is expanded to its exact binary ratio before the ceil so
    that ranks never drift by one from rounding (e.g. q=0.7, n=10).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < q < 1.0:
        raise ValueError("quantile level must be in (0, 1)")
    rank = -((-Fraction(*q.as_integer_ratio()) * n) // 1)  # ceil
    return max(1, min(n, int(rank)))


def daily_quantile_threshold(current: SparseOdm, th: int, q: float) -> ThresholdSet:
    """Nearest-rank quantile t over stored cells with value >= th.

    With no eligible cell, t falls back to th and the set is degenerate.
    """
    if th < 0:
        raise ValueError("th must be >= 0")
    eligible = sorted(v for v in current.entries.values() if v >= th)
    if not eligible:
        return ThresholdSet(th=th, q=q, t=float(th), eligible_count=0, degenerate=True)
    t = float(eligible[nearest_rank(q, len(eligible)) - 1])
    return ThresholdSet(th=th, q=q, t=t, eligible_count=len(eligible))


def bounds_for(stats: RollingStats, ts: ThresholdSet, mode: str = "clamped") -> Bounds:
    """Control bounds for one key given its rolling stats and the day's t."""
    if mode not in BOUNDS_MODES:
        raise ValueError(f"bounds mode must be one of {BOUNDS_MODES}")
    if stats.all_missing or stats.ma is None or stats.sd is None:
        raise ValueError(
            "bounds are not computable for an all-missing history; "
            "the key must be reported as missing data"
        )
    ma, sd, t = stats.ma, stats.sd, ts.t
    upper = ma + max(t, 3.0 * sd)
    low = min(ma - t, ma - 3.0 * sd)
    lower = min(low, 0.0) if mode == "paper_literal" else max(low, 0.0)
    return Bounds(key=stats.key, lower=lower, upper=upper, mode=mode)


def relative_increment(observed: int, ma: float) -> float:
    """Percent increment of the observed value over the moving average.

    A flow born from a zero average is the strongest possible excess and
    maps to +inf (only reachable when th=0 lets ma=0 keys stay eligible).
    """
    if ma == 0.0:
        return math.inf if observed > 0 else 0.0
    return (observed / ma - 1.0) * 100.0
