import datetime as dt
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odmwatch import FlowKey, SparseOdm, TimeWindow, key_universe, rolling_stats_for_keys
from odmwatch.rolling import stats_from_values
from odmwatch.store import HistorySlice

MONDAY = dt.date(2021, 6, 7)
KEY = FlowKey.cell("A", "B")


def make_slice(values, p=None):
    """History slice holding a single (A,B) cell; None marks a missing date."""
    values = list(values)
    p = p or len(values)
    dates = tuple(MONDAY - dt.timedelta(days=7 * (k + 1)) for k in range(p))
    slots = []
    for k in range(p):
        v = values[k] if k < len(values) else None
        if v is None:
            slots.append(None)
        else:
            window = TimeWindow.full_day(dates[k])
            slots.append(SparseOdm(window, {("A", "B"): v} if v else {}))
    return HistorySlice(dates, tuple(slots))


def test_constant_series():
    (stats,) = rolling_stats_for_keys(make_slice([100, 100, 100, 100]), [KEY])
    assert stats.ma == 100.0
    assert stats.sd == 0.0
    assert stats.available == 4


def test_alternating_series():
    (stats,) = rolling_stats_for_keys(make_slice([90, 110, 90, 110]), [KEY])
    assert stats.ma == 100.0
    assert stats.sd == 10.0


def test_missing_slots_excluded_from_n():
    (stats,) = rolling_stats_for_keys(make_slice([120, None, 80, None]), [KEY])
    assert stats.available == 2
    assert stats.ma == 100.0
    assert stats.sd == 20.0


def test_absent_key_counts_as_zero():
    # (A,B) absent from one available matrix: value 0, still 4 periods.
    slice_ = make_slice([100, 0, 100, 100])
    (stats,) = rolling_stats_for_keys(slice_, [KEY])
    assert stats.available == 4
    assert stats.ma == 75.0


def test_all_missing_is_flagged():
    (stats,) = rolling_stats_for_keys(make_slice([None, None]), [KEY])
    assert stats.all_missing
    assert stats.ma is None and stats.sd is None


def test_empty_key_list_rejected():
    with pytest.raises(ValueError):
        rolling_stats_for_keys(make_slice([1]), [])


def test_marginal_key_stats():
    dates = (MONDAY - dt.timedelta(days=7),)
    m = SparseOdm(
        TimeWindow.full_day(dates[0]), {("A", "B"): 10, ("C", "B"): 5, ("B", "B"): 99}
    )
    slice_ = HistorySlice(dates, (m,))
    (stats,) = rolling_stats_for_keys(slice_, [FlowKey.inbound("B")])
    assert stats.ma == 15.0


def test_key_universe_union():
    current = SparseOdm(TimeWindow.full_day(MONDAY), {("A", "B"): 1})
    past = SparseOdm(TimeWindow.full_day(MONDAY - dt.timedelta(days=7)), {("A", "C"): 2})
    slice_ = HistorySlice((past.window.date,), (past,))
    universe = key_universe(current, slice_)
    assert set(universe) == {
        FlowKey.cell("A", "B"),
        FlowKey.cell("A", "C"),
        FlowKey.outbound("A"),
        FlowKey.inbound("B"),
        FlowKey.inbound("C"),
    }


def test_key_universe_empty():
    current = SparseOdm(TimeWindow.full_day(MONDAY), {})
    slice_ = HistorySlice((MONDAY - dt.timedelta(days=7),), (None,))
    assert key_universe(current, slice_) == []


def test_key_universe_diagonal_only():
    current = SparseOdm(TimeWindow.full_day(MONDAY), {("A", "A"): 5})
    slice_ = HistorySlice((MONDAY - dt.timedelta(days=7),), (None,))
    universe = key_universe(current, slice_)
    assert set(universe) == {
        FlowKey.cell("A", "A"),
        FlowKey.outbound("A"),
        FlowKey.inbound("A"),
    }


def test_key_universe_is_sorted():
    current = SparseOdm(
        TimeWindow.full_day(MONDAY), {("B", "A"): 1, ("A", "B"): 1, ("A", "A"): 1}
    )
    slice_ = HistorySlice((MONDAY - dt.timedelta(days=7),), (None,))
    universe = key_universe(current, slice_)
    assert universe == sorted(universe, key=FlowKey.sort_key)
    assert [k.kind for k in universe] == sorted(k.kind for k in universe)


values_lists = st.lists(st.integers(min_value=0, max_value=10**6), min_size=1, max_size=8)


@settings(max_examples=150, deadline=None)
@given(values_lists)
def test_sd_identity(values):
    stats = stats_from_values(KEY, values)
    n = len(values)
    mean_sq = sum(v * v for v in values) / n
    assert stats.sd is not None and stats.ma is not None
    assert stats.sd**2 + stats.ma**2 == pytest.approx(mean_sq, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(values_lists, st.randoms())
def test_order_invariance(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    a = stats_from_values(KEY, values)
    b = stats_from_values(KEY, shuffled)
    assert a.ma == b.ma and a.sd == b.sd


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=10**9), st.integers(min_value=1, max_value=6))
def test_constant_series_exact(value, n):
    stats = stats_from_values(KEY, [value] * n)
    assert stats.ma == float(value)
    assert stats.sd == 0.0


def test_marginalize_then_average_equals_average_then_marginalize():
    # Marginal stats are linear: the mean of per-date marginals equals the
    # marginal of the mean matrix.
    dates = tuple(MONDAY - dt.timedelta(days=7 * k) for k in (1, 2))
    m1 = SparseOdm(TimeWindow.full_day(dates[0]), {("A", "B"): 10, ("C", "B"): 2})
    m2 = SparseOdm(TimeWindow.full_day(dates[1]), {("A", "B"): 20, ("B", "B"): 9})
    slice_ = HistorySlice(dates, (m1, m2))
    (stats,) = rolling_stats_for_keys(slice_, [FlowKey.inbound("B")])
    per_date = [m1.inbound_excl_diag("B"), m2.inbound_excl_diag("B")]
    assert stats.ma == sum(per_date) / 2
    mean_matrix_marginal = (10 + 2 + 20) / 2
    assert stats.ma == mean_matrix_marginal


def test_float_cast_matches_engine_semantics():
    # Huge totals: the scalar path must round the integer sum to float
    # before dividing, exactly like the vectorized int64 -> float64 cast.
    big = 2**60 + 3
    stats = stats_from_values(KEY, [big, big])
    assert stats.ma == float(2 * big) / 2
    assert math.isfinite(stats.ma)
