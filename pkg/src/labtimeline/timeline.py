"""Clinical-path assembly: grouped test rows × filtered day columns.

The path is the complete model the UI renders one-to-one: ordered rows,
ordered day columns with care statuses and gap hints, sparse cells carrying
category and relevant-change flag, plus day summaries and the activity
series. Relevant-change flags are always computed on the full per-test
history and projected into the window, so narrowing the view can never
silently change a highlight.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from enum import Enum
from typing import IO, TYPE_CHECKING

from . import analytics
from .analytics import DEFAULT_THRESHOLD_PERCENT, ActivityPoint, DaySummary
from .categorize import categorize_result
from .errors import NotFoundError
from .model import (
    DayStatus,
    Patient,
    ResultCategory,
    TestGroup,
    group_name_of,
    row_sort_key,
)

if TYPE_CHECKING:
    from .store import Dataset


class DayOrder(Enum):
    ASCENDING = "asc"
    DESCENDING = "desc"


@dataclass(frozen=True)
class PathOptions:
    date_from: date | None = None
    date_to: date | None = None
    only_days_with_tests: bool = False
    day_order: DayOrder = DayOrder.ASCENDING
    selected_tests: frozenset[str] | None = None
    selected_groups: frozenset[str] | None = None

    def __post_init__(self) -> None:
        if self.date_from and self.date_to and self.date_from > self.date_to:
            raise ValueError("date_from must not exceed date_to")


@dataclass(frozen=True)
class Column:
    """One visible day. gap_after marks a calendar jump to the next visible
    column (only possible with the only-days-with-tests filter on)."""

    day: date
    status: DayStatus
    gap_after: bool = False


@dataclass(frozen=True)
class Row:
    group: str
    test: str


@dataclass(frozen=True)
class Cell:
    value: float
    category: ResultCategory
    relevant_change: bool


@dataclass(frozen=True)
class ClinicalPath:
    patient: Patient
    options: PathOptions
    columns: list[Column]
    rows: list[Row]
    cells: dict[tuple[str, date], Cell] = field(default_factory=dict)
    day_summaries: list[DaySummary] = field(default_factory=list)
    activity: list[ActivityPoint] = field(default_factory=list)


def build_clinical_path(
    dataset: "Dataset",
    patient_id: str,
    options: PathOptions = PathOptions(),
    threshold_percent: float = DEFAULT_THRESHOLD_PERCENT,
    groups: list[TestGroup] | None = None,
) -> ClinicalPath:
    """Assemble the full path for one patient under the given options.

    Rows are the patient's tests inside the window intersected with the
    test/group selection, ordered by group rank then table row order
    (unknown tests trail alphabetically). Columns are either the distinct
    days of the selected results or, without the sparse filter, the
    contiguous day range of the window.
    """
    patient = dataset.patients.get(patient_id)
    if patient is None:
        raise NotFoundError(f"unknown patient {patient_id!r}")

    selected = [
        r for r in dataset.results_for(patient_id)
        if analytics._in_window(r.day, options.date_from, options.date_to)
        and (options.selected_tests is None or r.test in options.selected_tests)
        and (options.selected_groups is None or group_name_of(r.test, groups) in options.selected_groups)
    ]

    tests = sorted({r.test for r in selected}, key=lambda t: row_sort_key(t, groups))
    rows = [Row(group=group_name_of(t, groups), test=t) for t in tests]

    days = _column_days(selected, options)
    flags = analytics.relevant_change_map(dataset, patient_id, threshold_percent)
    day_set = set(days)
    cells = {
        (r.test, r.day): Cell(
            value=r.value,
            category=categorize_result(r, dataset.cuts),
            relevant_change=flags.get((r.test, r.day), False),
        )
        for r in selected
        if r.day in day_set
    }

    columns = _with_gap_markers([Column(d, patient.status_on(d)) for d in days])
    summaries = analytics.day_summaries(
        dataset, patient_id, options.date_from, options.date_to, threshold_percent,
        flags=flags,
    )
    activity = [
        ActivityPoint(s.day, s.test_count, s.relevant_change_count) for s in summaries
    ]
    path = ClinicalPath(
        patient=patient,
        options=options,
        columns=columns,
        rows=rows,
        cells=cells,
        day_summaries=summaries,
        activity=activity,
    )
    if options.day_order is DayOrder.DESCENDING:
        path = _reversed_path(path, options)
    return path


def _column_days(selected, options: PathOptions) -> list[date]:
    observed = sorted({r.day for r in selected})
    if options.only_days_with_tests:
        return observed
    lo = options.date_from or (observed[0] if observed else None)
    hi = options.date_to or (observed[-1] if observed else None)
    if lo is None or hi is None:
        return []
    return [lo + timedelta(days=i) for i in range((hi - lo).days + 1)]


def _with_gap_markers(columns: list[Column]) -> list[Column]:
    return [
        replace(col, gap_after=(abs((nxt.day - col.day).days) > 1))
        for col, nxt in zip(columns, columns[1:])
    ] + columns[-1:]


def toggle_day_order(path: ClinicalPath) -> ClinicalPath:
    """Reverse the column order (and summary/activity lists to match)."""
    flipped = DayOrder.DESCENDING if path.options.day_order is DayOrder.ASCENDING \
        else DayOrder.ASCENDING
    return _reversed_path(path, replace(path.options, day_order=flipped))


def _reversed_path(path: ClinicalPath, options: PathOptions) -> ClinicalPath:
    columns = _with_gap_markers([replace(c, gap_after=False) for c in reversed(path.columns)])
    return ClinicalPath(
        patient=path.patient,
        options=options,
        columns=columns,
        rows=path.rows,
        cells=path.cells,
        day_summaries=list(reversed(path.day_summaries)),
        activity=list(reversed(path.activity)),
    )


_CATEGORY_CODES = {
    ResultCategory.VERY_LOW: "VL",
    ResultCategory.LOW: "L",
    ResultCategory.NORMAL: "N",
    ResultCategory.HIGH: "H",
    ResultCategory.VERY_HIGH: "VH",
}


def export_path_delimited(path: ClinicalPath, dest: IO[str], separator: str = "|") -> None:
    """Delimited export: one row per test, one column of category codes per day."""
    writer = csv.writer(dest, delimiter=separator, lineterminator="\n")
    writer.writerow(["group", "test"] + [c.day.isoformat() for c in path.columns])
    for row in path.rows:
        codes = [
            _CATEGORY_CODES[cell.category] if (cell := path.cells.get((row.test, c.day))) else ""
            for c in path.columns
        ]
        writer.writerow([row.group, row.test] + codes)
