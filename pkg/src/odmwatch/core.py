"""Core domain types for origin-destination matrix (ODM) monitoring.

An ODM snapshot holds movement counts between labelled geographical areas
for one time window of one calendar date. Snapshots are sparse: absent
(origin, destination) pairs mean a count of zero. Diagonal entries count
people who stay inside an area, so the marginal flows used for monitoring
always exclude them.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

# Area labels are opaque strings; the label set is discovered from data.
AreaId = str

FULL_DAY_START = dt.time(0, 0, 0)
FULL_DAY_END = dt.time(23, 59, 59)


@dataclass(frozen=True, order=True)
class TimeWindow:
    """One sampling window: a calendar date plus start/end times of day."""

    date: dt.date
    start: dt.time
    end: dt.time

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise ValueError(
                f"window start {self.start} must precede end {self.end}"
            )

    @classmethod
    def full_day(cls, date: dt.date) -> "TimeWindow":
        return cls(date, FULL_DAY_START, FULL_DAY_END)

    def shifted(self, days: int) -> "TimeWindow":
        """Same time-of-day window on another date."""
        return TimeWindow(self.date + dt.timedelta(days=days), self.start, self.end)

    def times_key(self) -> str:
        return f"{self.start.isoformat()}-{self.end.isoformat()}"


@dataclass(frozen=True)
class FlowKey:
    """One monitored series: a single cell or a diagonal-excluded marginal.

    ``kind`` is one of ``"cell"``, ``"inbound"`` or ``"outbound"``. Marginal
    keys always denote the diagonal-excluded sums.
    """

    kind: str
    origin: AreaId | None = None
    destination: AreaId | None = None

    def __post_init__(self) -> None:
        if self.kind == "cell":
            if not self.origin or not self.destination:
                raise ValueError("cell key needs origin and destination")
        elif self.kind == "inbound":
            if not self.destination or self.origin is not None:
                raise ValueError("inbound key needs only a destination")
        elif self.kind == "outbound":
            if not self.origin or self.destination is not None:
                raise ValueError("outbound key needs only an origin")
        else:
            raise ValueError(f"unknown flow-key kind {self.kind!r}")

    @classmethod
    def cell(cls, origin: AreaId, destination: AreaId) -> "FlowKey":
        return cls("cell", origin, destination)

    @classmethod
    def inbound(cls, destination: AreaId) -> "FlowKey":
        return cls("inbound", destination=destination)

    @classmethod
    def outbound(cls, origin: AreaId) -> "FlowKey":
        return cls("outbound", origin=origin)

    def sort_key(self) -> tuple[str, str, str]:
        # kind names happen to sort cell < inbound < outbound, which is the
        # report order; within a kind, order by area labels.
        return (self.kind, self.origin or "", self.destination or "")


def _validate_label(label: AreaId) -> None:
    if not isinstance(label, str) or not label:
        raise ValueError(f"area label must be a non-empty string, got {label!r}")


class SparseOdm:
    """Immutable sparse ODM snapshot for one time window.

    Counts are nonnegative integers; zero counts are dropped on
    construction so that "absent" and "zero" stay interchangeable.
    """

    __slots__ = ("window", "_entries")

    def __init__(
        self,
        window: TimeWindow,
        entries: Mapping[tuple[AreaId, AreaId], int] | Iterable[tuple[tuple[AreaId, AreaId], int]],
    ) -> None:
        self.window = window
        items = entries.items() if isinstance(entries, Mapping) else entries
        store: dict[tuple[AreaId, AreaId], int] = {}
        for (origin, destination), count in items:
            _validate_label(origin)
            _validate_label(destination)
            if isinstance(count, bool) or not isinstance(count, int):
                raise ValueError(f"count for ({origin}, {destination}) must be an integer")
            if count < 0:
                raise ValueError(f"negative count {count} for ({origin}, {destination})")
            if (origin, destination) in store:
                raise ValueError(f"duplicate cell ({origin}, {destination})")
            if count > 0:
                store[(origin, destination)] = count
        self._entries = store

    @property
    def entries(self) -> Mapping[tuple[AreaId, AreaId], int]:
        return MappingProxyType(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseOdm):
            return NotImplemented
        return self.window == other.window and self._entries == other._entries

    def __repr__(self) -> str:
        return f"SparseOdm({self.window.date} {self.window.times_key()}, {len(self)} cells)"

    def cell_value(self, origin: AreaId, destination: AreaId) -> int:
        """Stored count for (origin, destination), 0 when absent."""
        return self._entries.get((origin, destination), 0)

    def inbound_excl_diag(self, destination: AreaId) -> int:
        """Total flow into ``destination`` from all other areas."""
        return sum(
            count
            for (o, d), count in self._entries.items()
            if d == destination and o != d
        )

    def outbound_excl_diag(self, origin: AreaId) -> int:
        """Total flow out of ``origin`` to all other areas."""
        return sum(
            count
            for (o, d), count in self._entries.items()
            if o == origin and o != d
        )

    def all_marginals_excl_diag(self) -> dict[FlowKey, int]:
        """Every nonzero inbound and outbound marginal in a single pass.

        Areas whose marginal is zero (e.g. areas appearing only on the
        diagonal) are omitted; callers should treat absent keys as 0.
        """
        inbound: dict[AreaId, int] = {}
        outbound: dict[AreaId, int] = {}
        for (o, d), count in self._entries.items():
            if o == d:
                continue
            outbound[o] = outbound.get(o, 0) + count
            inbound[d] = inbound.get(d, 0) + count
        result: dict[FlowKey, int] = {}
        for origin, total in outbound.items():
            result[FlowKey.outbound(origin)] = total
        for destination, total in inbound.items():
            result[FlowKey.inbound(destination)] = total
        return result

    def mass(self) -> int:
        """Sum of all stored counts, diagonal included."""
        return sum(self._entries.values())

    def areas(self) -> set[AreaId]:
        out: set[AreaId] = set()
        for o, d in self._entries:
            out.add(o)
            out.add(d)
        return out

    def value_of(self, key: FlowKey) -> int:
        """Observed value of any monitored series on this snapshot."""
        if key.kind == "cell":
            return self.cell_value(key.origin, key.destination)  # type: ignore[arg-type]
        if key.kind == "inbound":
            return self.inbound_excl_diag(key.destination)  # type: ignore[arg-type]
        return self.outbound_excl_diag(key.origin)  # type: ignore[arg-type]
