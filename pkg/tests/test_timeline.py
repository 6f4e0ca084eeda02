"""Clinical-path assembly: columns, rows, cells, ordering, export."""

from __future__ import annotations

import io
from datetime import timedelta

import pytest

from labtimeline.errors import NotFoundError
from labtimeline.ingest import clean_dataset
from labtimeline.model import DayStatus, LabResult, ResultCategory
from labtimeline.timeline import (
    DayOrder,
    PathOptions,
    build_clinical_path,
    export_path_delimited,
    toggle_day_order,
)

from conftest import d, hb, mcv


@pytest.fixture()
def sparse_dataset():
    """One patient with results only on days 1 and 3."""
    results = [
        hb("PX", d(1), 13.0),
        hb("PX", d(3), 14.0),
        mcv("PX", d(3), 90.0),
    ]
    dataset, _ = clean_dataset(results)
    return dataset


class TestColumns:
    def test_only_days_with_tests(self, sparse_dataset):
        path = build_clinical_path(sparse_dataset, "PX", PathOptions(only_days_with_tests=True))
        assert [c.day for c in path.columns] == [d(1), d(3)]

    def test_contiguous_without_flag(self, sparse_dataset):
        path = build_clinical_path(sparse_dataset, "PX", PathOptions(date_from=d(1), date_to=d(3)))
        assert [c.day for c in path.columns] == [d(1), d(2), d(3)]

    def test_contiguous_open_window_spans_results(self, sparse_dataset):
        path = build_clinical_path(sparse_dataset, "PX")
        assert [c.day for c in path.columns] == [d(1), d(2), d(3)]

    def test_every_filtered_column_has_a_cell(self, sparse_dataset):
        path = build_clinical_path(sparse_dataset, "PX", PathOptions(only_days_with_tests=True))
        for column in path.columns:
            assert any(day == column.day for (_, day) in path.cells)

    def test_gap_marker_set_when_filtering(self, sparse_dataset):
        path = build_clinical_path(sparse_dataset, "PX", PathOptions(only_days_with_tests=True))
        assert [c.gap_after for c in path.columns] == [True, False]
        dense = build_clinical_path(sparse_dataset, "PX")
        assert all(not c.gap_after for c in dense.columns)

    def test_statuses_joined_with_unknown_default(self, small_dataset):
        path = build_clinical_path(small_dataset, "PB2")
        status_by_day = {c.day: c.status for c in path.columns}
        assert status_by_day[d(5)] is DayStatus.DIED
        assert status_by_day[d(2)] is DayStatus.UNKNOWN

    def test_empty_window_is_valid(self, sparse_dataset):
        path = build_clinical_path(sparse_dataset, "PX",
                                   PathOptions(date_from=d(10), date_to=d(12)))
        assert [c.day for c in path.columns] == [d(10), d(11), d(12)]
        assert path.rows == [] and path.cells == {}
        sparse = build_clinical_path(
            sparse_dataset, "PX",
            PathOptions(date_from=d(10), date_to=d(12), only_days_with_tests=True),
        )
        assert sparse.columns == []


class TestRows:
    def test_group_order(self, small_dataset):
        dataset, _ = clean_dataset(
            small_dataset.results
            + [LabResult("PA1", d(1), "cTnI", 0.01, "ng/mL", 0.0, 0.04, "HF3")],
            small_dataset.patients,
        )
        path = build_clinical_path(dataset.with_cuts(small_dataset.cuts), "PA1")
        tests = [r.test for r in path.rows]
        assert tests.index("Hb") < tests.index("MCV") < tests.index("cTnI")
        assert path.rows[0].group == "Red Series Hemogram"

    def test_unknown_tests_trail(self, small_dataset):
        dataset, _ = clean_dataset(
            small_dataset.results
            + [LabResult("PA1", d(1), "zz_custom", 1.0, "", 0.0, 2.0, "HF3")],
            small_dataset.patients,
        )
        path = build_clinical_path(dataset, "PA1")
        assert path.rows[-1].test == "zz_custom"
        assert path.rows[-1].group == "Uncategorized"

    def test_selected_tests_filter(self, small_dataset):
        path = build_clinical_path(
            small_dataset, "PA1", PathOptions(selected_tests=frozenset({"Hb"}))
        )
        assert [r.test for r in path.rows] == ["Hb"]

    def test_selected_groups_filter(self, small_dataset):
        path = build_clinical_path(
            small_dataset, "PA1",
            PathOptions(selected_groups=frozenset({"Red Series Hemogram"})),
        )
        assert {r.test for r in path.rows} == {"Hb", "MCV"}

    def test_row_order_independent_of_input_order(self, small_dataset):
        reversed_results = list(reversed(small_dataset.results))
        dataset, _ = clean_dataset(reversed_results, small_dataset.patients)
        path_a = build_clinical_path(small_dataset, "PA1")
        path_b = build_clinical_path(dataset.with_cuts(small_dataset.cuts), "PA1")
        assert path_a.rows == path_b.rows


class TestCells:
    def test_cell_count_equals_filtered_results(self, small_dataset):
        path = build_clinical_path(small_dataset, "PA1")
        assert len(path.cells) == len(small_dataset.results_for("PA1"))

    def test_cell_payload(self, small_dataset):
        path = build_clinical_path(small_dataset, "PA1")
        cell = path.cells[("MCV", d(3))]
        assert cell.value == 99.0
        assert cell.category is ResultCategory.VERY_HIGH

    def test_flags_projected_from_full_series(self, small_dataset):
        # Hb 5→10.6 flags day 3 even when the window starts at day 3
        narrow = build_clinical_path(small_dataset, "PA1",
                                     PathOptions(date_from=d(3), date_to=d(4)))
        assert narrow.cells[("Hb", d(3))].relevant_change is True

    def test_flags_identical_across_filter_settings(self, small_dataset):
        base = build_clinical_path(small_dataset, "PA1")
        filtered = build_clinical_path(small_dataset, "PA1",
                                       PathOptions(only_days_with_tests=True))
        for key, cell in filtered.cells.items():
            assert cell == base.cells[key]


class TestDayOrder:
    def test_descending_option(self, small_dataset):
        asc = build_clinical_path(small_dataset, "PA1")
        desc = build_clinical_path(small_dataset, "PA1",
                                   PathOptions(day_order=DayOrder.DESCENDING))
        assert [c.day for c in desc.columns] == [c.day for c in asc.columns][::-1]
        assert desc.cells == asc.cells

    def test_toggle_is_involution(self, small_dataset):
        path = build_clinical_path(small_dataset, "PA1")
        assert toggle_day_order(toggle_day_order(path)) == path

    def test_single_column_unchanged(self, sparse_dataset):
        path = build_clinical_path(sparse_dataset, "PX",
                                   PathOptions(date_from=d(3), date_to=d(3)))
        toggled = toggle_day_order(path)
        assert [c.day for c in toggled.columns] == [d(3)]

    def test_summaries_follow_order(self, small_dataset):
        path = build_clinical_path(small_dataset, "PA1")
        toggled = toggle_day_order(path)
        assert [s.day for s in toggled.day_summaries] == \
            [s.day for s in path.day_summaries][::-1]
        assert [a.day for a in toggled.activity] == [a.day for a in path.activity][::-1]


class TestWindowMonotonicity:
    def test_shrinking_never_adds(self, small_dataset):
        wide = build_clinical_path(small_dataset, "PA1",
                                   PathOptions(date_from=d(1), date_to=d(4)))
        narrow = build_clinical_path(small_dataset, "PA1",
                                     PathOptions(date_from=d(2), date_to=d(3)))
        assert set(c.day for c in narrow.columns) <= set(c.day for c in wide.columns)
        assert set(narrow.cells) <= set(wide.cells)


class TestValidationAndErrors:
    def test_unknown_patient(self, small_dataset):
        with pytest.raises(NotFoundError):
            build_clinical_path(small_dataset, "nobody")

    def test_inverted_window_rejected(self):
        with pytest.raises(ValueError):
            PathOptions(date_from=d(5), date_to=d(1))


def test_export_delimited(small_dataset):
    path = build_clinical_path(small_dataset, "PA1",
                               PathOptions(only_days_with_tests=True))
    buffer = io.StringIO()
    export_path_delimited(path, buffer)
    lines = buffer.getvalue().splitlines()
    assert lines[0].split("|")[:2] == ["group", "test"]
    assert lines[0].split("|")[2:] == [d(i).isoformat() for i in (1, 2, 3, 4)]
    hb_line = next(line for line in lines if "|Hb|" in line)
    assert hb_line.split("|")[2:] == ["N", "VL", "L", "L"]
    mcv_line = next(line for line in lines if "|MCV|" in line)
    assert mcv_line.split("|")[2:] == ["N", "H", "VH", "H"]
