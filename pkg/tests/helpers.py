"""Shared test utilities: dense <-> sparse conversion and randomized
store-backed comparison trials against the dense oracle."""

from __future__ import annotations

import datetime as dt

import numpy as np

import dense_oracle
from odmwatch import DetectorConfig, SparseOdm, TimeWindow, run_window
from odmwatch.store import HistoryQuery, HistoryStore

BASE_DATE = dt.date(2021, 6, 7)  # a Monday


def dense_to_sparse(dense: np.ndarray, labels: list[str], window: TimeWindow) -> SparseOdm:
    entries = {}
    n = len(labels)
    for i in range(n):
        for j in range(n):
            v = int(dense[i, j])
            if v > 0:
                entries[(labels[i], labels[j])] = v
    return SparseOdm(window, entries)


def random_labels(rng: np.random.Generator, n: int) -> list[str]:
    # Unsorted on purpose: the production path must sort labels itself.
    prefixes = rng.permutation([f"{c}{i:03d}" for c in "QZKMB" for i in range(n)])
    return [str(p) for p in prefixes[:n]]


def random_dense(
    rng: np.random.Generator, n: int, density: float, vmax: int
) -> np.ndarray:
    mask = rng.random((n, n)) < density
    values = rng.integers(0, vmax + 1, size=(n, n))
    return (mask * values).astype(np.int64)


def compare_report_to_oracle(report, oracle) -> list[str]:
    """Return a list of discrepancies (empty = exact agreement)."""
    problems = []
    if report.threshold.t != oracle["t"]:
        problems.append(f"t: {report.threshold.t} != {oracle['t']}")
    if report.threshold.eligible_count != oracle["eligible_count"]:
        problems.append("eligible_count mismatch")
    if report.threshold.degenerate != oracle["degenerate"]:
        problems.append("degenerate flag mismatch")

    expected = oracle["outcomes"]
    expected_flagged = {
        k: v for k, v in expected.items() if v["status"] != "no_signal"
    }
    got = {
        (o.key.kind, o.key.origin, o.key.destination): o for o in report.outcomes
    }
    if report.summary["keys"] != len(expected):
        problems.append(
            f"universe size {report.summary['keys']} != {len(expected)}"
        )
    no_signal = sum(1 for v in expected.values() if v["status"] == "no_signal")
    if report.summary["no_signal"] != no_signal:
        problems.append("no_signal count mismatch")

    for key in set(expected_flagged) | set(got):
        want = expected_flagged.get(key)
        have = got.get(key)
        if want is None or have is None:
            problems.append(f"{key}: flagged on one side only ({want=}, {have=})")
            continue
        if have.status != want["status"]:
            problems.append(f"{key}: status {have.status} != {want['status']}")
            continue
        if have.observed != want["observed"]:
            problems.append(f"{key}: observed {have.observed} != {want['observed']}")
        if want["status"] == "missing_data":
            continue
        if have.ma != want["ma"] or have.sd != want["sd"]:
            problems.append(f"{key}: ma/sd mismatch")
        if want["status"] != "signal":
            continue
        s = have.signal
        if (
            s.direction != want["direction"]
            or s.level != want["level"]
            or s.inc_percent != want["inc"]
            or s.lower_bound != want["lower"]
            or s.upper_bound != want["upper"]
        ):
            problems.append(f"{key}: signal fields mismatch {s} != {want}")
    return problems


def run_store_backed_trial(
    rng: np.random.Generator, store_root, trial: int
) -> list[str]:
    """One randomized end-to-end comparison: random matrices through a real
    store and run_window versus the dense oracle."""
    n = int(rng.integers(2, 51))
    p = int(rng.integers(1, 5))
    stride = "weekly" if trial % 2 == 0 else "daily"
    mode = "clamped" if (trial // 2) % 2 == 0 else "paper_literal"
    th = int(rng.choice([0, 5, 20]))
    q = float(rng.choice([0.5, 0.75, 0.9]))
    vmax = int(rng.choice([30, 300, 3000]))
    density = float(rng.choice([0.05, 0.3, 0.8]))
    labels = random_labels(rng, n)

    window = TimeWindow.full_day(BASE_DATE)
    step = 7 if stride == "weekly" else 1
    current_dense = random_dense(rng, n, density, vmax)
    history_dense: list[np.ndarray | None] = []
    for _ in range(p):
        if rng.random() < 0.3:
            history_dense.append(None)
        else:
            history_dense.append(random_dense(rng, n, density, vmax))

    source = f"trial{trial}"
    store = HistoryStore(store_root, retention_days=None)
    for k, h in enumerate(history_dense, start=1):
        if h is None:
            continue
        past = TimeWindow.full_day(BASE_DATE - dt.timedelta(days=k * step))
        store.put_snapshot(source, dense_to_sparse(h, labels, past))

    current = dense_to_sparse(current_dense, labels, window)
    slice_ = store.fetch_history(HistoryQuery(source, window, p, stride))
    report = run_window(current, slice_, DetectorConfig(th=th, quantile=q, bounds_mode=mode))

    oracle = dense_oracle.evaluate_dense(
        current_dense, history_dense, labels, th, q, mode
    )
    return compare_report_to_oracle(report, oracle)
