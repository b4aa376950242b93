"""Per-window signal evaluation, day-level orchestration and report output.

Every monitored series of a window gets exactly one status:

* ``missing_data`` - all p past periods unavailable, nothing to compare to;
* ``below_eligibility`` - moving average under the threshold th;
* ``no_signal`` - observed value inside [lower, upper] (level 0);
* ``signal`` - out of bounds, classified level 1-3 by the absolute percent
  increment over the moving average (<50, 50-100, >=100).

Missing data is checked before eligibility, eligibility before bounds, so
an unavailable history never masquerades as a drop.
"""

from __future__ import annotations

import concurrent.futures
import csv
import datetime as dt
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterator

import numpy as np

from . import _engine
from .core import FlowKey, SparseOdm, TimeWindow
from .ingestion import canonical_windows
from .rolling import RollingStats
from .store import HistoryQuery, HistorySlice, HistoryStore
from .thresholds import (
    BOUNDS_MODES,
    ThresholdSet,
    bounds_for,
    relative_increment,
)

REPORT_COLUMNS = (
    "source",
    "date",
    "start",
    "end",
    "kind",
    "origin",
    "destination",
    "status",
    "direction",
    "level",
    "inc_percent",
    "observed",
    "ma",
    "sd",
    "lower",
    "upper",
)

_STATUS_NAMES = {
    _engine.STATUS_NO_SIGNAL: "no_signal",
    _engine.STATUS_SIGNAL: "signal",
    _engine.STATUS_BELOW_ELIGIBILITY: "below_eligibility",
    _engine.STATUS_MISSING_DATA: "missing_data",
}
_DIRECTION_NAMES = {_engine.DIR_UPPER: "upper", _engine.DIR_LOWER: "lower"}


@dataclass(frozen=True)
class DetectorConfig:
    """The three tuning parameters plus the lower-bound mode."""

    th: int = 20
    quantile: float = 0.75
    bounds_mode: str = "clamped"

    def __post_init__(self) -> None:
        if self.th < 0:
            raise ValueError("th must be >= 0")
        if not 0.0 < self.quantile < 1.0:
            raise ValueError("quantile must be in (0, 1)")
        if self.bounds_mode not in BOUNDS_MODES:
            raise ValueError(f"bounds_mode must be one of {BOUNDS_MODES}")


@dataclass(frozen=True)
class Signal:
    """One out-of-bounds observation."""

    key: FlowKey
    window: TimeWindow | None
    direction: str
    level: int
    inc_percent: float
    observed: int
    ma: float
    sd: float
    lower_bound: float
    upper_bound: float


@dataclass(frozen=True)
class KeyOutcome:
    """Exactly one status per key per window."""

    key: FlowKey
    status: str
    observed: int
    ma: float | None = None
    sd: float | None = None
    signal: Signal | None = None


@dataclass
class WindowReport:
    source_id: str
    window: TimeWindow
    threshold: ThresholdSet
    available: int
    outcomes: list[KeyOutcome]
    summary: dict[str, int]
    timings: dict[str, float] = field(default_factory=dict)


@dataclass
class DayReport:
    source_id: str
    date: dt.date
    config: DetectorConfig
    p: int
    stride: str
    window_reports: list[WindowReport]
    missing_windows: list[str] = field(default_factory=list)
    extra_windows: list[str] = field(default_factory=list)
    input_digest: str = ""

    @property
    def fully_missing(self) -> bool:
        return not self.window_reports

    def summary(self) -> dict[str, int]:
        totals: dict[str, int] = {}
        for report in self.window_reports:
            for name, value in report.summary.items():
                totals[name] = totals.get(name, 0) + value
        totals["windows_present"] = len(self.window_reports)
        totals["windows_missing"] = len(self.missing_windows)
        return totals


def classify_level(inc_percent: float) -> int:
    """Severity band of an out-of-bounds observation, from |INC|."""
    magnitude = abs(inc_percent)
    if magnitude < 50.0:
        return 1
    if magnitude < 100.0:
        return 2
    return 3


def evaluate_key(
    observed: int,
    stats: RollingStats,
    ts: ThresholdSet,
    mode: str = "clamped",
    window: TimeWindow | None = None,
) -> KeyOutcome:
    """Classify one series: missing data, then eligibility, then bounds."""
    if stats.all_missing:
        return KeyOutcome(key=stats.key, status="missing_data", observed=observed)
    assert stats.ma is not None and stats.sd is not None
    if stats.ma < ts.th:
        return KeyOutcome(
            key=stats.key,
            status="below_eligibility",
            observed=observed,
            ma=stats.ma,
            sd=stats.sd,
        )
    bounds = bounds_for(stats, ts, mode)
    if bounds.lower <= observed <= bounds.upper:
        return KeyOutcome(
            key=stats.key,
            status="no_signal",
            observed=observed,
            ma=stats.ma,
            sd=stats.sd,
        )
    direction = "upper" if observed > bounds.upper else "lower"
    inc = relative_increment(observed, stats.ma)
    signal = Signal(
        key=stats.key,
        window=window,
        direction=direction,
        level=classify_level(inc),
        inc_percent=inc,
        observed=observed,
        ma=stats.ma,
        sd=stats.sd,
        lower_bound=bounds.lower,
        upper_bound=bounds.upper,
    )
    return KeyOutcome(
        key=stats.key,
        status="signal",
        observed=observed,
        ma=stats.ma,
        sd=stats.sd,
        signal=signal,
    )


def _materialize_outcomes(
    evaluation: _engine.WindowEvaluation,
    labels: list[str],
    window: TimeWindow,
) -> list[KeyOutcome]:
    """Build KeyOutcome objects for every non-level0 series, in report order."""
    outcomes: list[KeyOutcome] = []
    n_areas = evaluation.n_areas

    def key_for(kind: str, code: int) -> FlowKey:
        if kind == "cell":
            return FlowKey.cell(labels[code // n_areas], labels[code % n_areas])
        if kind == "inbound":
            return FlowKey.inbound(labels[code])
        return FlowKey.outbound(labels[code])

    for kind, codes, block in evaluation.blocks():
        hits = np.flatnonzero(block.status != _engine.STATUS_NO_SIGNAL)
        for i in hits:
            status = _STATUS_NAMES[int(block.status[i])]
            key = key_for(kind, int(codes[i]))
            observed = int(block.observed[i])
            if status == "missing_data":
                outcomes.append(KeyOutcome(key=key, status=status, observed=observed))
                continue
            ma = float(block.ma[i])
            sd = float(block.sd[i])
            if status == "below_eligibility":
                outcomes.append(
                    KeyOutcome(key=key, status=status, observed=observed, ma=ma, sd=sd)
                )
                continue
            signal = Signal(
                key=key,
                window=window,
                direction=_DIRECTION_NAMES[int(block.direction[i])],
                level=int(block.level[i]),
                inc_percent=float(block.inc[i]),
                observed=observed,
                ma=ma,
                sd=sd,
                lower_bound=float(block.lower[i]),
                upper_bound=float(block.upper[i]),
            )
            outcomes.append(
                KeyOutcome(
                    key=key, status=status, observed=observed, ma=ma, sd=sd, signal=signal
                )
            )
    return outcomes


def run_window(
    current: SparseOdm,
    slice_: HistorySlice,
    config: DetectorConfig,
    source_id: str = "",
) -> WindowReport:
    """Evaluate one window against its history slice.

    The monitored universe is every cell present now or in any available
    past period, plus the outbound marginal of every origin and the inbound
    marginal of every destination in that union. Output ordering is fixed:
    cells, then inbound, then outbound, each sorted by area labels.
    """
    labels = sorted(current.areas().union(*(m.areas() for m in slice_.available_snapshots())))
    label_ids = {label: i for i, label in enumerate(labels)}
    n_areas = max(1, len(labels))

    current_cols = _engine.columnar_from_entries(current.entries, label_ids, n_areas)
    history_cols = [
        _engine.columnar_from_entries(m.entries, label_ids, n_areas) if m is not None else None
        for m in slice_.slots
    ]
    evaluation = _engine.evaluate_window(
        current_cols,
        history_cols,
        n_areas,
        config.th,
        config.quantile,
        config.bounds_mode,
    )
    threshold = ThresholdSet(
        th=config.th,
        q=config.quantile,
        t=evaluation.t,
        eligible_count=evaluation.eligible_count,
        degenerate=evaluation.degenerate,
    )
    return WindowReport(
        source_id=source_id,
        window=current.window,
        threshold=threshold,
        available=evaluation.available,
        outcomes=_materialize_outcomes(evaluation, labels, current.window),
        summary=evaluation.summary(),
        timings=evaluation.timings,
    )


def _day_input_digest(store: HistoryStore, source_id: str, dates: list[dt.date]) -> str:
    digest = hashlib.sha256()
    for date in sorted(set(dates)):
        day = store.day_digest(source_id, date)
        digest.update(f"{date.isoformat()}:{day or 'absent'}\n".encode("utf-8"))
    return digest.hexdigest()


def detect_day(
    store: HistoryStore,
    source_id: str,
    date: dt.date,
    config: DetectorConfig,
    p: int = 4,
    stride: str = "weekly",
    workers: int | None = None,
) -> DayReport:
    """Run every stored window of a date through the detector.

    Window evaluations are independent; they may run on a thread pool, and
    the report order (and bytes) never depends on the worker count.
    """
    windows = store.windows_for(source_id, date)
    profile = store.get_profile(source_id)
    missing: list[str] = []
    extra: list[str] = []
    if profile is not None:
        expected = {
            w.times_key() for w in canonical_windows(date, profile.expected_windows_per_day)
        }
        present = {w.times_key() for w in windows}
        missing = sorted(expected - present)
        extra = sorted(present - expected)

    def evaluate(window: TimeWindow) -> WindowReport:
        current = store.get_snapshot(source_id, window)
        if current is None:
            raise RuntimeError(f"window {window} disappeared from the store")
        slice_ = store.fetch_history(HistoryQuery(source_id, window, p, stride))
        return run_window(current, slice_, config, source_id=source_id)

    max_workers = workers if workers and workers > 0 else (os.cpu_count() or 1)
    if max_workers > 1 and len(windows) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as pool:
            reports = list(pool.map(evaluate, windows))
    else:
        reports = [evaluate(w) for w in windows]

    history_dates = [
        date - dt.timedelta(days=k * (1 if stride == "daily" else 7))
        for k in range(1, p + 1)
    ]
    return DayReport(
        source_id=source_id,
        date=date,
        config=config,
        p=p,
        stride=stride,
        window_reports=reports,
        missing_windows=missing,
        extra_windows=extra,
        input_digest=_day_input_digest(store, source_id, [date] + history_dates),
    )


# -- serialization ------------------------------------------------------


def _json_number(value: float | None) -> float | None:
    # Non-finite increments (flow born from a zero average) have no JSON
    # representation; level and direction still carry the classification.
    if value is None or not math.isfinite(value):
        return None
    return value


def _outcome_row(report: DayReport, window: WindowReport, outcome: KeyOutcome) -> dict:
    key = outcome.key
    signal = outcome.signal
    return {
        "source": report.source_id,
        "date": report.date.isoformat(),
        "start": window.window.start.isoformat(),
        "end": window.window.end.isoformat(),
        "kind": key.kind,
        "origin": key.origin,
        "destination": key.destination,
        "status": outcome.status,
        "direction": signal.direction if signal else None,
        "level": signal.level if signal else None,
        "inc_percent": _json_number(signal.inc_percent) if signal else None,
        "observed": outcome.observed,
        "ma": _json_number(outcome.ma),
        "sd": _json_number(outcome.sd),
        "lower": _json_number(signal.lower_bound) if signal else None,
        "upper": _json_number(signal.upper_bound) if signal else None,
    }


def _report_header(report: DayReport) -> dict:
    return {
        "record": "header",
        "source": report.source_id,
        "date": report.date.isoformat(),
        "config": {
            "th": report.config.th,
            "p": report.p,
            "quantile": report.config.quantile,
            "stride": report.stride,
            "bounds_mode": report.config.bounds_mode,
        },
        "input_digest": report.input_digest,
        "windows": [
            {
                "start": w.window.start.isoformat(),
                "end": w.window.end.isoformat(),
                "available": w.available,
                "t": w.threshold.t,
                "eligible_count": w.threshold.eligible_count,
                "degenerate": w.threshold.degenerate,
                "keys": w.summary["keys"],
            }
            for w in report.window_reports
        ],
        "missing_windows": report.missing_windows,
        "extra_windows": report.extra_windows,
        "fully_missing": report.fully_missing,
    }


def _report_summary(report: DayReport) -> dict:
    return {"record": "summary", **report.summary()}


def iter_outcome_rows(report: DayReport) -> Iterator[dict]:
    for window in report.window_reports:
        for outcome in window.outcomes:
            yield _outcome_row(report, window, outcome)


def write_day_report_jsonl(report: DayReport, handle: IO[str]) -> None:
    """Header line, one line per non-level0 outcome, one summary line."""
    dump = lambda obj: json.dumps(obj, separators=(",", ":"), allow_nan=False)
    handle.write(dump(_report_header(report)) + "\n")
    for row in iter_outcome_rows(report):
        handle.write(dump(row) + "\n")
    handle.write(dump(_report_summary(report)) + "\n")


def write_day_report_csv(report: DayReport, path: str | Path) -> None:
    """Outcome table with the same columns; header and summary go to a
    ``.meta.json`` sidecar (CSV has no place for them)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in iter_outcome_rows(report):
            writer.writerow(
                ["" if row[col] is None else row[col] for col in REPORT_COLUMNS]
            )
    meta = {"header": _report_header(report), "summary": _report_summary(report)}
    sidecar = path.with_name(path.name + ".meta.json")
    sidecar.write_text(
        json.dumps(meta, separators=(",", ":"), allow_nan=False) + "\n", encoding="utf-8"
    )
