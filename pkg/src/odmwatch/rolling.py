"""Rolling mean and standard deviation over a history slice.

Sums are accumulated as exact integers and divided once at the end, so the
mean is ma = total / n and the deviation is sd = sqrt(max(0, sumsq/n - ma^2))
with n the number of *available* periods. A date marked missing is excluded
from n; a key merely absent from an available snapshot counts as 0. The
variance argument is clamped at zero: for constant series the identity can
dip microscopically negative in floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import FlowKey, SparseOdm
from .store import HistorySlice


@dataclass(frozen=True)
class RollingStats:
    """Per-key moving average and rolling deviation over past periods.

    When ``available`` is 0 the whole period set was missing and ``ma``/``sd``
    are ``None``: no signal may be estimated for the key.
    """

    key: FlowKey
    ma: float | None
    sd: float | None
    available: int

    @property
    def all_missing(self) -> bool:
        return self.available == 0


def stats_from_values(key: FlowKey, values: Sequence[int]) -> RollingStats:
    """Rolling stats from the per-period values of the available periods."""
    n = len(values)
    if n == 0:
        return RollingStats(key, None, None, 0)
    total = 0
    sumsq = 0
    for v in values:
        total += v
        sumsq += v * v
    # float() before the division mirrors the vectorized engine's
    # int64 -> float64 cast, keeping both paths bit-identical.
    ma = float(total) / n
    mean_sq = float(sumsq) / n
    sd = math.sqrt(max(0.0, mean_sq - ma * ma))
    return RollingStats(key, ma, sd, n)


def rolling_stats_for_keys(
    slice_: HistorySlice, keys: Iterable[FlowKey]
) -> list[RollingStats]:
    """Rolling stats for every requested key over one history slice."""
    keys = list(keys)
    if not keys:
        raise ValueError("keys must be non-empty")
    available = slice_.available_snapshots()
    if not available:
        return [RollingStats(key, None, None, 0) for key in keys]

    need_marginals = any(k.kind != "cell" for k in keys)
    marginals = [m.all_marginals_excl_diag() if need_marginals else {} for m in available]

    out = []
    for key in keys:
        if key.kind == "cell":
            values = [m.cell_value(key.origin, key.destination) for m in available]
        else:
            values = [marg.get(key, 0) for marg in marginals]
        out.append(stats_from_values(key, values))
    return out


def key_universe(current: SparseOdm, slice_: HistorySlice) -> list[FlowKey]:
    """Every series to evaluate for a date: cells seen now or in any
    available past period, plus the outbound marginal of every origin and
    the inbound marginal of every destination in that cell union.

    Keys present only in history stay in the universe (their current value
    is 0), which is what makes sudden drops detectable. The result is
    sorted by kind then area labels.
    """
    cells: set[tuple[str, str]] = set(current.entries)
    for m in slice_.available_snapshots():
        cells.update(m.entries)
    keys = [FlowKey.cell(o, d) for (o, d) in cells]
    keys.extend(FlowKey.outbound(o) for o in {o for o, _ in cells})
    keys.extend(FlowKey.inbound(d) for d in {d for _, d in cells})
    keys.sort(key=FlowKey.sort_key)
    return keys
