"""Rate-of-change flagging, per-test series and per-day summaries.

A "relevant change" compares each result only with the previous observed
result of the same test (calendar gaps are skipped), using the percentage
rate of change; crossing the threshold flags the later point. Flags are a
property of the full value sequence: they never depend on which window or
day filter is currently displayed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from datetime import date
from typing import TYPE_CHECKING, Sequence

from .categorize import ReferenceCuts, categorize_result
from .errors import NotFoundError
from .model import ChangeObservation, ResultCategory

if TYPE_CHECKING:
    from .store import Dataset

DEFAULT_THRESHOLD_PERCENT = 100.0


def rate_of_change(v_earlier: float, v_later: float) -> float:
    """Percentage change between two consecutive values.

    A nonzero value appearing from a zero baseline is an infinite change,
    signed by the later value; zero to zero is no change.
    """
    if v_earlier == 0:
        if v_later == 0:
            return 0.0
        return math.copysign(math.inf, v_later)
    return (v_later / v_earlier - 1.0) * 100.0


def observe_change(
    v_earlier: float, v_later: float, threshold_percent: float = DEFAULT_THRESHOLD_PERCENT
) -> ChangeObservation:
    rc = rate_of_change(v_earlier, v_later)
    return ChangeObservation(
        v_earlier=v_earlier,
        v_later=v_later,
        rc_percent=rc,
        relevant=abs(rc) >= threshold_percent,
        threshold_percent=threshold_percent,
    )


@dataclass(frozen=True)
class SeriesPoint:
    day: date
    value: float
    category: ResultCategory
    relevant_change: bool = False


@dataclass(frozen=True)
class SeriesOverlay:
    """Horizontal line values for a single-test chart; cuts may be absent."""

    ref_min: float
    ref_max: float
    low_cut: float | None
    high_cut: float | None


@dataclass(frozen=True)
class TestSeries:
    test: str
    points: list[SeriesPoint]
    overlay: SeriesOverlay
    relevant_change_days: list[date]


@dataclass(frozen=True)
class DaySummary:
    day: date
    test_count: int
    normal_count: int
    abnormal_count: int
    relevant_change_count: int


@dataclass(frozen=True)
class ActivityPoint:
    day: date
    test_count: int
    relevant_change_count: int


def flag_relevant_changes(
    series: Sequence[SeriesPoint],
    threshold_percent: float = DEFAULT_THRESHOLD_PERCENT,
) -> list[SeriesPoint]:
    """Set relevant_change on each point from its consecutive-pair RC.

    The series must be day-sorted. The first point is never flagged; an
    infinite RC always flags.
    """
    if threshold_percent <= 0:
        raise ValueError("threshold_percent must be > 0")
    flagged: list[SeriesPoint] = []
    for i, point in enumerate(series):
        relevant = False
        if i > 0:
            relevant = abs(rate_of_change(series[i - 1].value, point.value)) >= threshold_percent
        flagged.append(replace(point, relevant_change=relevant))
    return flagged


def _relevant_flags(values: Sequence[float], threshold_percent: float) -> list[bool]:
    flags = [False]
    for earlier, later in zip(values, values[1:]):
        flags.append(abs(rate_of_change(earlier, later)) >= threshold_percent)
    return flags[: len(values)]


def relevant_change_map(
    dataset: "Dataset",
    patient_id: str,
    threshold_percent: float = DEFAULT_THRESHOLD_PERCENT,
) -> dict[tuple[str, date], bool]:
    """Flags for every (test, day) of a patient, from full unfiltered series."""
    flags: dict[tuple[str, date], bool] = {}
    for test in dataset.tests_of(patient_id):
        series = dataset.results_for(patient_id, test)
        for result, flag in zip(series, _relevant_flags([r.value for r in series], threshold_percent)):
            flags[(test, result.day)] = flag
    return flags


def _in_window(day: date, date_from: date | None, date_to: date | None) -> bool:
    return (date_from is None or day >= date_from) and (date_to is None or day <= date_to)


def test_series(
    dataset: "Dataset",
    patient_id: str,
    test: str,
    date_from: date | None = None,
    date_to: date | None = None,
    threshold_percent: float = DEFAULT_THRESHOLD_PERCENT,
) -> TestSeries:
    """Categorized, flagged series of one test for one patient.

    Flags come from the full history; the window only selects which points
    are returned. The overlay reference lines use the most recent record's
    bounds (ranges may vary per record) plus the test's population cuts.
    """
    if patient_id not in dataset.patients:
        raise NotFoundError(f"unknown patient {patient_id!r}")
    full = dataset.results_for(patient_id, test)
    if not full:
        raise NotFoundError(f"patient {patient_id!r} has no {test!r} results")

    cuts = dataset.cuts.get(test, ReferenceCuts(test))
    flags = _relevant_flags([r.value for r in full], threshold_percent)
    points = [
        SeriesPoint(r.day, r.value, categorize_result(r, dataset.cuts), flag)
        for r, flag in zip(full, flags)
        if _in_window(r.day, date_from, date_to)
    ]
    latest = full[-1]
    return TestSeries(
        test=test,
        points=points,
        overlay=SeriesOverlay(latest.ref_min, latest.ref_max, cuts.low_cut, cuts.high_cut),
        relevant_change_days=[p.day for p in points if p.relevant_change],
    )


def day_summaries(
    dataset: "Dataset",
    patient_id: str,
    date_from: date | None = None,
    date_to: date | None = None,
    threshold_percent: float = DEFAULT_THRESHOLD_PERCENT,
    flags: dict[tuple[str, date], bool] | None = None,
) -> list[DaySummary]:
    """One summary per day with at least one result, in day order.

    `flags` may carry a precomputed relevant_change_map to avoid a second
    pass when the caller already built one.
    """
    if patient_id not in dataset.patients:
        raise NotFoundError(f"unknown patient {patient_id!r}")
    if flags is None:
        flags = relevant_change_map(dataset, patient_id, threshold_percent)
    per_day: dict[date, list[int]] = {}  # day -> [tests, normal, relevant]
    for r in dataset.results_for(patient_id):
        if not _in_window(r.day, date_from, date_to):
            continue
        counts = per_day.setdefault(r.day, [0, 0, 0])
        counts[0] += 1
        if categorize_result(r, dataset.cuts) is ResultCategory.NORMAL:
            counts[1] += 1
        if flags.get((r.test, r.day), False):
            counts[2] += 1
    return [
        DaySummary(
            day=day,
            test_count=tests,
            normal_count=normal,
            abnormal_count=tests - normal,
            relevant_change_count=relevant,
        )
        for day, (tests, normal, relevant) in sorted(per_day.items())
    ]


def activity_series(
    dataset: "Dataset",
    patient_id: str,
    date_from: date | None = None,
    date_to: date | None = None,
    threshold_percent: float = DEFAULT_THRESHOLD_PERCENT,
) -> list[ActivityPoint]:
    """Projection of day_summaries onto (day, test_count, relevant_change_count)."""
    return [
        ActivityPoint(s.day, s.test_count, s.relevant_change_count)
        for s in day_summaries(dataset, patient_id, date_from, date_to, threshold_percent)
    ]
