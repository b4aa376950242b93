"""File-backed store of ODM snapshots across runs.

Layout: one CSV per (source_id, date) holding every window of that date,
in the ingestion format, plus a JSON sidecar index with byte offsets so a
single window can be fetched without parsing the whole file. Writes are
atomic (temp file + rename): a reader concurrent with a writer sees either
the old or the new day file, never a torn one.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import json
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .core import SparseOdm, TimeWindow
from .ingestion import (
    CSV_COLUMNS,
    SourceProfile,
    group_records,
    iter_csv_records,
    parse_record,
    records_for,
)

logger = logging.getLogger(__name__)

STRIDE_DAYS = {"daily": 1, "weekly": 7}
_DATE_FILE = re.compile(r"^\d{4}-\d{2}-\d{2}\.csv$")


@dataclass(frozen=True)
class HistoryQuery:
    """Request for the p periods preceding a window, at a given stride."""

    source_id: str
    window: TimeWindow
    p: int
    stride: str = "weekly"

    def __post_init__(self) -> None:
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.stride not in STRIDE_DAYS:
            raise ValueError(f"stride must be one of {sorted(STRIDE_DAYS)}")


@dataclass(frozen=True)
class HistorySlice:
    """Exactly p history slots, newest first; ``None`` marks a missing period.

    ``slots[k]`` corresponds to ``dates[k]`` = query date - (k+1) * stride
    days, with the same start/end times as the queried window.
    """

    dates: tuple[dt.date, ...]
    slots: tuple[SparseOdm | None, ...]

    def __post_init__(self) -> None:
        if len(self.dates) != len(self.slots):
            raise ValueError("dates and slots must have equal length")

    @property
    def p(self) -> int:
        return len(self.slots)

    @property
    def available(self) -> int:
        return sum(1 for s in self.slots if s is not None)

    def available_snapshots(self) -> list[SparseOdm]:
        return [s for s in self.slots if s is not None]


class StoreError(OSError):
    """Storage-level failure (unreadable or unwritable files)."""


class HistoryStore:
    """Date-granular snapshot store rooted at a directory.

    Single-writer per (source_id, date) is assumed; readers are unlimited.
    ``retention_days`` bounds how far behind the newest stored date old day
    files are kept (pruned on write); ``None`` disables pruning.
    """

    def __init__(self, root: str | Path, retention_days: int | None = 35) -> None:
        self.root = Path(root)
        self.retention_days = retention_days
        self.root.mkdir(parents=True, exist_ok=True)

    # -- paths ---------------------------------------------------------

    def _source_dir(self, source_id: str) -> Path:
        if not source_id or "/" in source_id or source_id.startswith("."):
            raise ValueError(f"bad source id {source_id!r}")
        return self.root / source_id

    def _day_csv(self, source_id: str, date: dt.date) -> Path:
        return self._source_dir(source_id) / f"{date.isoformat()}.csv"

    def _day_index(self, source_id: str, date: dt.date) -> Path:
        return self._source_dir(source_id) / f"{date.isoformat()}.index.json"

    # -- profiles ------------------------------------------------------

    def put_profile(self, profile: SourceProfile) -> None:
        directory = self._source_dir(profile.source_id)
        directory.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(
            {
                "source_id": profile.source_id,
                "expected_windows_per_day": profile.expected_windows_per_day,
                "has_diagonal_as_stayers": profile.has_diagonal_as_stayers,
            },
            separators=(",", ":"),
        )
        _atomic_write_bytes(directory / "profile.json", payload.encode("utf-8"))

    def get_profile(self, source_id: str) -> SourceProfile | None:
        path = self._source_dir(source_id) / "profile.json"
        if not path.exists():
            return None
        data = json.loads(path.read_text(encoding="utf-8"))
        return SourceProfile(
            source_id=data["source_id"],
            expected_windows_per_day=data["expected_windows_per_day"],
            has_diagonal_as_stayers=data.get("has_diagonal_as_stayers", True),
        )

    # -- snapshots -----------------------------------------------------

    def put_snapshot(self, source_id: str, snapshot: SparseOdm) -> None:
        """Persist one snapshot; an existing same-window snapshot is replaced."""
        date = snapshot.window.date
        try:
            day = {m.window: m for m in self._read_day(source_id, date)}
            if snapshot.window in day:
                logger.info(
                    "overwriting %s %s window %s",
                    source_id,
                    date,
                    snapshot.window.times_key(),
                )
            day[snapshot.window] = snapshot
            self._write_day(source_id, date, list(day.values()))
        except OSError as exc:
            raise StoreError(f"cannot store {source_id}/{date}: {exc}") from exc
        self._prune(source_id)

    def get_snapshot(self, source_id: str, window: TimeWindow) -> SparseOdm | None:
        """Retrieve one snapshot, or ``None`` when it was never stored."""
        csv_path = self._day_csv(source_id, window.date)
        if not csv_path.exists():
            return None
        entry = self._index_entry(source_id, window)
        if entry is not None:
            offset, length = entry
            if length == 0:
                # A stored window whose cells are all zero: present but empty.
                return SparseOdm(window, {})
            try:
                with open(csv_path, "rb") as handle:
                    handle.seek(offset)
                    block = handle.read(length).decode("utf-8")
                rows = list(csv.reader(io.StringIO(block, newline="")))
                records = [
                    (parse_record(row, "store-block", i), i)
                    for i, row in enumerate(rows, start=1)
                    if row
                ]
                matrices = group_records(records, csv_path.name)
            except (ValueError, OSError):
                matrices = []  # stale index; fall back to a full parse
            if len(matrices) == 1 and matrices[0].window == window:
                return matrices[0]
        for m in self._read_day(source_id, window.date):
            if m.window == window:
                return m
        return None

    def windows_for(self, source_id: str, date: dt.date) -> list[TimeWindow]:
        """Windows stored for one date, ordered by start time."""
        return [m.window for m in self._read_day(source_id, date)]

    def fetch_history(self, query: HistoryQuery) -> HistorySlice:
        """The p past periods of a window, newest first.

        Daily stride looks at d-1 ... d-p; weekly stride at d-7 ... d-7p,
        preserving the weekday. Absent snapshots become ``None`` markers,
        never an error.
        """
        step = STRIDE_DAYS[query.stride]
        dates = []
        slots = []
        for k in range(1, query.p + 1):
            past = query.window.shifted(-k * step)
            dates.append(past.date)
            slots.append(self.get_snapshot(query.source_id, past))
        return HistorySlice(tuple(dates), tuple(slots))

    def dates_for(self, source_id: str) -> list[dt.date]:
        directory = self._source_dir(source_id)
        if not directory.is_dir():
            return []
        return sorted(
            dt.date.fromisoformat(p.name[:-4])
            for p in directory.iterdir()
            if _DATE_FILE.match(p.name)
        )

    def day_digest(self, source_id: str, date: dt.date) -> str | None:
        """SHA-256 of the stored day file, for report audit headers."""
        path = self._day_csv(source_id, date)
        if not path.exists():
            return None
        return hashlib.sha256(path.read_bytes()).hexdigest()

    # -- internals -----------------------------------------------------

    def _read_day(self, source_id: str, date: dt.date) -> list[SparseOdm]:
        path = self._day_csv(source_id, date)
        if not path.exists():
            return []
        try:
            with open(path, "r", encoding="utf-8", newline="") as handle:
                matrices = group_records(iter_csv_records(handle, path.name), path.name)
        except OSError as exc:
            raise StoreError(f"cannot read {path}: {exc}") from exc
        # All-zero windows leave no CSV rows; only the index remembers them.
        present = {m.window for m in matrices}
        for window in self._index_window_list(source_id, date):
            if window not in present:
                matrices.append(SparseOdm(window, {}))
        matrices.sort(key=lambda m: (m.window.start, m.window.end))
        return matrices

    def _write_day(self, source_id: str, date: dt.date, matrices: list[SparseOdm]) -> None:
        directory = self._source_dir(source_id)
        directory.mkdir(parents=True, exist_ok=True)
        matrices.sort(key=lambda m: (m.window.start, m.window.end))

        header = ",".join(CSV_COLUMNS) + "\n"
        blocks: list[bytes] = [header.encode("utf-8")]
        index_windows = []
        offset = len(blocks[0])
        for m in matrices:
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            for row in records_for(m):
                writer.writerow(row)
            block = buf.getvalue().encode("utf-8")
            blocks.append(block)
            index_windows.append(
                {
                    "start": m.window.start.isoformat(),
                    "end": m.window.end.isoformat(),
                    "offset": offset,
                    "length": len(block),
                    "rows": len(m),
                }
            )
            offset += len(block)

        payload = b"".join(blocks)
        index = {"file_size": len(payload), "windows": index_windows}
        _atomic_write_bytes(self._day_csv(source_id, date), payload)
        _atomic_write_bytes(
            self._day_index(source_id, date),
            json.dumps(index, separators=(",", ":")).encode("utf-8"),
        )

    def _load_index(self, source_id: str, date: dt.date) -> dict | None:
        index_path = self._day_index(source_id, date)
        csv_path = self._day_csv(source_id, date)
        if not index_path.exists():
            return None
        try:
            index = json.loads(index_path.read_text(encoding="utf-8"))
            if index.get("file_size") != csv_path.stat().st_size:
                return None  # index and csv out of step; use full parse
            return index
        except (ValueError, KeyError, OSError):
            return None

    def _index_window_list(self, source_id: str, date: dt.date) -> list[TimeWindow]:
        index = self._load_index(source_id, date)
        if index is None:
            return []
        try:
            return [
                TimeWindow(
                    date,
                    dt.time.fromisoformat(entry["start"]),
                    dt.time.fromisoformat(entry["end"]),
                )
                for entry in index["windows"]
            ]
        except (ValueError, KeyError):
            return []

    def _index_entry(self, source_id: str, window: TimeWindow) -> tuple[int, int] | None:
        index = self._load_index(source_id, window.date)
        if index is None:
            return None
        start = window.start.isoformat()
        end = window.end.isoformat()
        try:
            for entry in index["windows"]:
                if entry["start"] == start and entry["end"] == end:
                    return int(entry["offset"]), int(entry["length"])
        except (ValueError, KeyError):
            return None
        return None

    def _prune(self, source_id: str) -> None:
        if self.retention_days is None:
            return
        dates = self.dates_for(source_id)
        if not dates:
            return
        cutoff = dates[-1] - dt.timedelta(days=self.retention_days)
        for date in dates:
            if date < cutoff:
                logger.info("pruning %s/%s (older than %d days)", source_id, date, self.retention_days)
                self._day_csv(source_id, date).unlink(missing_ok=True)
                self._day_index(source_id, date).unlink(missing_ok=True)


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as handle:
        handle.write(payload)
        handle.flush()
        os.fsync(handle.fileno())
    os.replace(tmp, path)


def retention_for(p: int, stride: str) -> int:
    """Default retention: long enough for the rolling window, at least 35 days."""
    return max(p * STRIDE_DAYS[stride], 35)
