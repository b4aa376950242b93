"""Vectorized window evaluation over integer-encoded sparse matrices.

A matrix is a pair of aligned arrays: unique sorted int64 cell codes
(origin * n_areas + destination) and int64 counts. One window's detection
aligns the current and history matrices on the union of their codes,
accumulates exact integer sums, and applies the bounds test elementwise.
Every floating-point expression here mirrors the scalar functions in
``rolling`` and ``thresholds`` operation for operation, so both paths
produce bit-identical numbers.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .thresholds import nearest_rank

STATUS_NO_SIGNAL = 0
STATUS_SIGNAL = 1
STATUS_BELOW_ELIGIBILITY = 2
STATUS_MISSING_DATA = 3

DIR_NONE = 0
DIR_UPPER = 1
DIR_LOWER = 2


@dataclass(frozen=True)
class Columnar:
    """One matrix as sorted unique int64 cell codes plus counts."""

    codes: np.ndarray
    values: np.ndarray


def columnar_from_entries(
    entries, label_ids: dict[str, int], n_areas: int
) -> Columnar:
    """Encode a label-keyed sparse mapping with a shared label index."""
    n = len(entries)
    codes = np.empty(n, dtype=np.int64)
    values = np.empty(n, dtype=np.int64)
    a = n_areas
    for i, ((origin, destination), count) in enumerate(entries.items()):
        codes[i] = label_ids[origin] * a + label_ids[destination]
        values[i] = count
    order = np.argsort(codes, kind="stable")
    return Columnar(codes[order], values[order])


@dataclass
class SeriesBlock:
    """Per-series evaluation results for one group of monitored series."""

    observed: np.ndarray
    status: np.ndarray
    ma: np.ndarray | None = None
    sd: np.ndarray | None = None
    direction: np.ndarray | None = None
    level: np.ndarray | None = None
    inc: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.observed)


@dataclass
class WindowEvaluation:
    n_areas: int
    available: int
    t: float
    eligible_count: int
    degenerate: bool
    cell_codes: np.ndarray
    cells: SeriesBlock
    inbound_areas: np.ndarray
    inbound: SeriesBlock
    outbound_areas: np.ndarray
    outbound: SeriesBlock
    timings: dict[str, float]

    def blocks(self) -> list[tuple[str, np.ndarray, SeriesBlock]]:
        return [
            ("cell", self.cell_codes, self.cells),
            ("inbound", self.inbound_areas, self.inbound),
            ("outbound", self.outbound_areas, self.outbound),
        ]

    def summary(self) -> dict[str, int]:
        counts = {
            "keys": 0,
            "no_signal": 0,
            "signal": 0,
            "below_eligibility": 0,
            "missing_data": 0,
            "upper": 0,
            "lower": 0,
            "level1": 0,
            "level2": 0,
            "level3": 0,
        }
        for _, _, block in self.blocks():
            counts["keys"] += len(block)
            status = block.status
            counts["no_signal"] += int(np.count_nonzero(status == STATUS_NO_SIGNAL))
            counts["signal"] += int(np.count_nonzero(status == STATUS_SIGNAL))
            counts["below_eligibility"] += int(
                np.count_nonzero(status == STATUS_BELOW_ELIGIBILITY)
            )
            counts["missing_data"] += int(np.count_nonzero(status == STATUS_MISSING_DATA))
            if block.direction is not None:
                counts["upper"] += int(np.count_nonzero(block.direction == DIR_UPPER))
                counts["lower"] += int(np.count_nonzero(block.direction == DIR_LOWER))
            if block.level is not None:
                signal = status == STATUS_SIGNAL
                for lvl in (1, 2, 3):
                    counts[f"level{lvl}"] += int(
                        np.count_nonzero(signal & (block.level == lvl))
                    )
        return counts


def _value_cap(periods: int) -> int:
    # n * value^2 must stay inside int64 during the exact accumulation.
    return math.isqrt((2**63 - 1) // max(1, periods))


def _check_cap(values: np.ndarray, cap: int, what: str) -> None:
    if len(values) and int(values.max()) > cap:
        raise ValueError(
            f"{what} value {int(values.max())} exceeds the vectorized engine "
            f"limit of {cap}; counts this large are not supported"
        )


def _group_starts(sorted_ids: np.ndarray) -> np.ndarray:
    if len(sorted_ids) == 0:
        return np.empty(0, dtype=np.int64)
    return np.flatnonzero(np.r_[True, sorted_ids[1:] != sorted_ids[:-1]])


def _group_sums(values: np.ndarray, starts: np.ndarray) -> np.ndarray:
    if len(starts) == 0:
        return np.empty(0, dtype=np.int64)
    return np.add.reduceat(values, starts)


def evaluate_window(
    current: Columnar,
    history: Sequence[Columnar | None],
    n_areas: int,
    th: int,
    q: float,
    mode: str,
) -> WindowEvaluation:
    """Evaluate every cell and marginal series of one window.

    ``history`` lists the p past periods (``None`` = missing period).
    """
    timings: dict[str, float] = {}
    t0 = time.perf_counter()

    a = np.int64(n_areas)
    avail = [h for h in history if h is not None]
    n = len(avail)
    cap = _value_cap(n)
    _check_cap(current.values, cap, "cell")
    for h in avail:
        _check_cap(h.values, cap, "cell")

    if n:
        universe = np.unique(
            np.concatenate([current.codes] + [h.codes for h in avail])
        )
    else:
        universe = current.codes
    m = len(universe)

    u_origin = universe // a
    u_dest = universe - u_origin * a
    offdiag = u_origin != u_dest

    # Outbound series group by origin (the code order); inbound series need
    # one permutation by destination, reused for every period.
    out_starts = _group_starts(u_origin)
    origin_areas = u_origin[out_starts] if m else np.empty(0, dtype=np.int64)
    dest_perm = np.argsort(u_dest, kind="stable")
    dest_sorted = u_dest[dest_perm]
    in_starts = _group_starts(dest_sorted)
    dest_areas = dest_sorted[in_starts] if m else np.empty(0, dtype=np.int64)

    def align(mat: Columnar) -> np.ndarray:
        dense = np.zeros(m, dtype=np.int64)
        dense[np.searchsorted(universe, mat.codes)] = mat.values
        return dense

    def marginal_sums(dense: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        masked = np.where(offdiag, dense, 0)
        out_sums = _group_sums(masked, out_starts)
        in_sums = _group_sums(masked[dest_perm], in_starts)
        return out_sums, in_sums

    observed = align(current)
    obs_out, obs_in = marginal_sums(observed)

    cell_stats = marg_out_stats = marg_in_stats = None
    if n:
        total = np.zeros(m, dtype=np.int64)
        sumsq = np.zeros(m, dtype=np.int64)
        tot_out = np.zeros(len(origin_areas), dtype=np.int64)
        sq_out = np.zeros_like(tot_out)
        tot_in = np.zeros(len(dest_areas), dtype=np.int64)
        sq_in = np.zeros_like(tot_in)
        for h in avail:
            dense = align(h)
            total += dense
            sumsq += dense * dense
            out_sums, in_sums = marginal_sums(dense)
            _check_cap(out_sums, cap, "outbound marginal")
            _check_cap(in_sums, cap, "inbound marginal")
            tot_out += out_sums
            sq_out += out_sums * out_sums
            tot_in += in_sums
            sq_in += in_sums * in_sums
        _check_cap(obs_out, cap, "outbound marginal")
        _check_cap(obs_in, cap, "inbound marginal")

        def finish(tot: np.ndarray, sq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            ma = tot / n
            sd = np.sqrt(np.maximum(0.0, sq / n - ma * ma))
            return ma, sd

        cell_stats = finish(total, sumsq)
        marg_out_stats = finish(tot_out, sq_out)
        marg_in_stats = finish(tot_in, sq_in)
    timings["stats"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    eligible_vals = current.values[current.values >= th]
    n_eligible = len(eligible_vals)
    if n_eligible:
        rank = nearest_rank(q, n_eligible)
        t_value = float(np.partition(eligible_vals, rank - 1)[rank - 1])
        degenerate = False
    else:
        t_value = float(th)
        degenerate = True
    timings["threshold"] = time.perf_counter() - t1

    t2 = time.perf_counter()

    def detect(obs: np.ndarray, stats: tuple[np.ndarray, np.ndarray] | None) -> SeriesBlock:
        if stats is None:
            return SeriesBlock(
                observed=obs,
                status=np.full(len(obs), STATUS_MISSING_DATA, dtype=np.int8),
            )
        ma, sd = stats
        upper = ma + np.maximum(t_value, 3.0 * sd)
        low = np.minimum(ma - t_value, ma - 3.0 * sd)
        if mode == "paper_literal":
            lower = np.minimum(low, 0.0)
        else:
            lower = np.maximum(low, 0.0)
        eligible = ma >= th
        up_sig = eligible & (obs > upper)
        lo_sig = eligible & (obs < lower)
        status = np.zeros(len(obs), dtype=np.int8)
        status[~eligible] = STATUS_BELOW_ELIGIBILITY
        status[up_sig | lo_sig] = STATUS_SIGNAL
        direction = np.zeros(len(obs), dtype=np.int8)
        direction[up_sig] = DIR_UPPER
        direction[lo_sig] = DIR_LOWER
        with np.errstate(divide="ignore", invalid="ignore"):
            inc = (obs / ma - 1.0) * 100.0
        zero_ma = ma == 0.0
        if zero_ma.any():
            inc[zero_ma & (obs > 0)] = math.inf
            inc[zero_ma & (obs == 0)] = 0.0
        magnitude = np.abs(inc)
        level = np.ones(len(obs), dtype=np.int8)
        level += (magnitude >= 50.0).astype(np.int8)
        level += (magnitude >= 100.0).astype(np.int8)
        return SeriesBlock(
            observed=obs,
            status=status,
            ma=ma,
            sd=sd,
            direction=direction,
            level=level,
            inc=inc,
            lower=lower,
            upper=upper,
        )

    cells = detect(observed, cell_stats)
    outbound = detect(obs_out, marg_out_stats)
    inbound = detect(obs_in, marg_in_stats)
    timings["detect"] = time.perf_counter() - t2

    return WindowEvaluation(
        n_areas=n_areas,
        available=n,
        t=t_value,
        eligible_count=n_eligible,
        degenerate=degenerate,
        cell_codes=universe,
        cells=cells,
        inbound_areas=dest_areas,
        inbound=inbound,
        outbound_areas=origin_areas,
        outbound=outbound,
        timings=timings,
    )
