"""Parsing and validation of ODM input files.

Input format: UTF-8 CSV with a header row and the columns
``date,start,end,origin,destination,count`` (a ``.gz`` variant is accepted).
Each distinct (date, start, end) in a file becomes one :class:`SparseOdm`.
"""

from __future__ import annotations

import csv
import datetime as dt
import gzip
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

from .core import SparseOdm, TimeWindow

CSV_COLUMNS = ("date", "start", "end", "origin", "destination", "count")


class OdmParseError(ValueError):
    """Malformed input row; carries the 1-based line number."""

    def __init__(self, source: str, line_no: int, message: str) -> None:
        super().__init__(f"{source}:{line_no}: {message}")
        self.source = source
        self.line_no = line_no


class OdmIntegrityError(ValueError):
    """Structurally valid input that violates dataset integrity."""

    def __init__(self, source: str, line_no: int, message: str) -> None:
        super().__init__(f"{source}:{line_no}: {message}")
        self.source = source
        self.line_no = line_no


@dataclass(frozen=True)
class OdmRecord:
    """One input row: a single cell of a single window."""

    date: dt.date
    start: dt.time
    end: dt.time
    origin: str
    destination: str
    count: int


@dataclass(frozen=True)
class SourceProfile:
    """Static expectations about one data source.

    ``expected_windows_per_day`` drives the missing/extra window checks;
    ``has_diagonal_as_stayers`` documents the diagonal semantics of the
    provider (marginals exclude the diagonal either way).
    """

    source_id: str
    expected_windows_per_day: int = 1
    has_diagonal_as_stayers: bool = True

    def __post_init__(self) -> None:
        if self.expected_windows_per_day < 1:
            raise ValueError("expected_windows_per_day must be >= 1")


@dataclass
class DayValidationReport:
    """Report-only comparison of one day's windows against expectations."""

    source_id: str
    date: dt.date
    missing_windows: list[str] = field(default_factory=list)
    extra_windows: list[str] = field(default_factory=list)
    total_volume: int = 0

    @property
    def clean(self) -> bool:
        return not self.missing_windows and not self.extra_windows

    def to_json(self) -> str:
        return json.dumps(
            {
                "source_id": self.source_id,
                "date": self.date.isoformat(),
                "missing_windows": self.missing_windows,
                "extra_windows": self.extra_windows,
                "total_volume": self.total_volume,
            },
            separators=(",", ":"),
        )


def _parse_date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise ValueError(f"bad date {text!r}, expected YYYY-MM-DD") from None


def _parse_time(text: str) -> dt.time:
    try:
        return dt.datetime.strptime(text, "%H:%M:%S").time()
    except ValueError:
        raise ValueError(f"bad time {text!r}, expected HH:MM:SS") from None


def _parse_count(text: str) -> int:
    try:
        count = int(text)
    except ValueError:
        raise ValueError(f"bad count {text!r}, expected a nonnegative integer") from None
    if count < 0:
        raise ValueError(f"negative count {count}")
    return count


def parse_record(row: Sequence[str], source: str, line_no: int) -> OdmRecord:
    if len(row) != len(CSV_COLUMNS):
        raise OdmParseError(
            source, line_no, f"expected {len(CSV_COLUMNS)} fields, got {len(row)}"
        )
    date_s, start_s, end_s, origin, destination, count_s = (f.strip() for f in row)
    try:
        date = _parse_date(date_s)
        start = _parse_time(start_s)
        end = _parse_time(end_s)
        count = _parse_count(count_s)
        if not origin or not destination:
            raise ValueError("empty area label")
        if start >= end:
            raise ValueError(f"window start {start_s} must precede end {end_s}")
    except ValueError as exc:
        raise OdmParseError(source, line_no, str(exc)) from None
    return OdmRecord(date, start, end, origin, destination, count)


def group_records(
    records: Iterable[tuple[OdmRecord, int]], source: str
) -> list[SparseOdm]:
    """Group (record, line_no) pairs into one snapshot per window.

    Duplicate (origin, destination) rows within one window are rejected;
    zero-count rows are dropped (absent and zero are equivalent).
    """
    grouped: dict[TimeWindow, dict[tuple[str, str], int]] = {}
    seen_lines: dict[TimeWindow, dict[tuple[str, str], int]] = {}
    for record, line_no in records:
        window = TimeWindow(record.date, record.start, record.end)
        cells = grouped.setdefault(window, {})
        lines = seen_lines.setdefault(window, {})
        pair = (record.origin, record.destination)
        if pair in lines:
            raise OdmIntegrityError(
                source,
                line_no,
                f"duplicate cell {pair} in window {window.date} "
                f"{window.times_key()} (first seen at line {lines[pair]})",
            )
        lines[pair] = line_no
        if record.count > 0:
            cells[pair] = record.count
    return [
        SparseOdm(window, grouped[window])
        for window in sorted(grouped, key=lambda w: (w.date, w.start, w.end))
    ]


def _open_text(path: Path) -> IO[str]:
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, "r", encoding="utf-8", newline="")


def iter_csv_records(
    handle: IO[str], source: str
) -> Iterator[tuple[OdmRecord, int]]:
    """Yield (record, line_no) from an open CSV stream, validating the header."""
    reader = csv.reader(handle)
    try:
        header = next(reader)
    except StopIteration:
        return
    if tuple(h.strip().lower() for h in header) != CSV_COLUMNS:
        raise OdmParseError(
            source, 1, f"bad header {header!r}, expected {','.join(CSV_COLUMNS)}"
        )
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        yield parse_record(row, source, line_no), line_no


def parse_file(path: str | Path, profile: SourceProfile | None = None) -> list[SparseOdm]:
    """Parse one CSV (or .csv.gz) file into snapshots, one per window.

    An empty file yields an empty list. Malformed rows raise
    :class:`OdmParseError` naming the line; duplicate cells raise
    :class:`OdmIntegrityError`.
    """
    path = Path(path)
    with _open_text(path) as handle:
        return group_records(iter_csv_records(handle, path.name), path.name)


def records_for(snapshot: SparseOdm) -> Iterator[tuple[str, str, str, str, str, str]]:
    """Serialize a snapshot back to CSV field tuples, deterministically ordered."""
    w = snapshot.window
    date_s = w.date.isoformat()
    start_s = w.start.isoformat()
    end_s = w.end.isoformat()
    for (origin, destination) in sorted(snapshot.entries):
        yield (
            date_s,
            start_s,
            end_s,
            origin,
            destination,
            str(snapshot.entries[(origin, destination)]),
        )


def write_snapshots_csv(snapshots: Sequence[SparseOdm], handle: IO[str]) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    ordered = sorted(snapshots, key=lambda m: (m.window.date, m.window.start, m.window.end))
    for snapshot in ordered:
        for row in records_for(snapshot):
            writer.writerow(row)


def canonical_windows(date: dt.date, per_day: int) -> list[TimeWindow]:
    """Equal division of a date into ``per_day`` windows, ends inclusive.

    ``per_day=1`` gives the whole-day window 00:00:00-23:59:59; ``per_day=24``
    gives hourly windows 00:00:00-00:59:59, ..., 23:00:00-23:59:59.
    """
    if per_day < 1:
        raise ValueError("windows per day must be >= 1")
    bounds = [i * 86400 // per_day for i in range(per_day)] + [86400]
    windows = []
    for i in range(per_day):
        start = dt.time(bounds[i] // 3600, bounds[i] % 3600 // 60, bounds[i] % 60)
        end_s = bounds[i + 1] - 1
        end = dt.time(end_s // 3600, end_s % 3600 // 60, end_s % 60)
        windows.append(TimeWindow(date, start, end))
    return windows


def validate_day(
    snapshots: Sequence[SparseOdm], profile: SourceProfile, date: dt.date
) -> DayValidationReport:
    """Compare one day's windows against the profile's expected schedule.

    Never mutates inputs; the result is report-only (missing and unexpected
    windows plus the day's total volume).
    """
    for snapshot in snapshots:
        if snapshot.window.date != date:
            raise ValueError(
                f"snapshot for {snapshot.window.date} passed to validate_day({date})"
            )
    expected = {w.times_key() for w in canonical_windows(date, profile.expected_windows_per_day)}
    present = {m.window.times_key() for m in snapshots}
    return DayValidationReport(
        source_id=profile.source_id,
        date=date,
        missing_windows=sorted(expected - present),
        extra_windows=sorted(present - expected),
        total_volume=sum(m.mass() for m in snapshots),
    )
