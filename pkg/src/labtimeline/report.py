"""Static report rendering: clinical-path figures next to the delimited export.

Produces the same picture the interactive UI draws — the category-symbol
matrix with the outcome-colored day band, single-test line charts with
reference/cut overlays and relevant-change markers, and the activity
chart — as PNG files for printing or attachment.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.lines import Line2D

from . import analytics, timeline
from .model import (
    DEFAULT_CATEGORY_COLORS,
    DEFAULT_STATUS_COLORS,
    ResultCategory,
)
from .store import Dataset

RELEVANT_COLOR = "#ff7f0e"

_MARKERS = {
    ResultCategory.VERY_LOW: "v",
    ResultCategory.LOW: "v",
    ResultCategory.NORMAL: "o",
    ResultCategory.HIGH: "^",
    ResultCategory.VERY_HIGH: "^",
}
_SIZES = {
    ResultCategory.VERY_LOW: 52.0,
    ResultCategory.LOW: 26.0,
    ResultCategory.NORMAL: 22.0,
    ResultCategory.HIGH: 26.0,
    ResultCategory.VERY_HIGH: 52.0,
}


def render_path_matrix(path: timeline.ClinicalPath, out_path: str | Path) -> Path:
    """Day × test matrix: one marker per cell, day-status band on top."""
    out_path = Path(out_path)
    n_cols, n_rows = max(len(path.columns), 1), max(len(path.rows), 1)
    fig_w = min(max(7.0, 2.0 + 0.16 * n_cols), 60.0)
    fig_h = min(max(3.5, 2.0 + 0.24 * n_rows), 40.0)
    fig, ax = plt.subplots(figsize=(fig_w, fig_h))

    col_index = {c.day: i for i, c in enumerate(path.columns)}
    row_index = {r.test: i for i, r in enumerate(path.rows)}

    by_category: dict[ResultCategory, tuple[list[int], list[int]]] = {
        c: ([], []) for c in ResultCategory
    }
    flagged_x: list[int] = []
    flagged_y: list[int] = []
    for (test, day), cell in path.cells.items():
        x, y = col_index[day], row_index[test]
        xs, ys = by_category[cell.category]
        xs.append(x)
        ys.append(y)
        if cell.relevant_change:
            flagged_x.append(x)
            flagged_y.append(y)
    if flagged_x:
        ax.scatter(flagged_x, flagged_y, s=120, marker="s", facecolors="none",
                   edgecolors=RELEVANT_COLOR, linewidths=1.6, zorder=2,
                   label="relevant change")
    for category, (xs, ys) in by_category.items():
        if xs:
            ax.scatter(xs, ys, s=_SIZES[category], marker=_MARKERS[category],
                       color=DEFAULT_CATEGORY_COLORS[category], zorder=3,
                       label=category.code.replace("_", " "))

    # outcome band above the matrix
    for i, column in enumerate(path.columns):
        ax.add_patch(plt.Rectangle(
            (i - 0.5, n_rows - 0.2), 1.0, 0.6, clip_on=False,
            color=DEFAULT_STATUS_COLORS[column.status],
        ))
        if column.gap_after:
            ax.axvline(i + 0.5, color="#999999", linestyle=":", linewidth=0.8, zorder=1)

    ax.set_xticks(range(len(path.columns)))
    ax.set_xticklabels(
        [c.day.strftime("%d/%m/%Y") for c in path.columns], rotation=90, fontsize=7
    )
    ax.set_yticks(range(len(path.rows)))
    ax.set_yticklabels([f"{r.test}  ({r.group})" for r in path.rows], fontsize=7)
    ax.set_xlim(-0.5, n_cols - 0.5)
    ax.set_ylim(-0.5, n_rows + 0.5)
    ax.invert_yaxis()
    ax.set_title(f"Clinical path — patient {path.patient.patient_id}")
    ax.legend(loc="upper left", bbox_to_anchor=(1.01, 1.0), fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_series_chart(series: analytics.TestSeries, out_path: str | Path) -> Path:
    """Single-test chart: value line, reference lines, cut lines, change marks."""
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(9, 4))
    days = [p.day for p in series.points]
    values = [p.value for p in series.points]
    ax.plot(days, values, color="#d62728", marker="o", markersize=3, linewidth=1.2,
            label=series.test)
    ax.axhline(series.overlay.ref_min, color="#08519c", linewidth=1.1, label="reference")
    ax.axhline(series.overlay.ref_max, color="#08519c", linewidth=1.1)
    for cut in (series.overlay.low_cut, series.overlay.high_cut):
        if cut is not None:
            ax.axhline(cut, color="#9ecae1", linewidth=1.1)
    for day in series.relevant_change_days:
        ax.axvline(day, color=RELEVANT_COLOR, linewidth=1.0)
    handles, labels = ax.get_legend_handles_labels()
    handles.append(Line2D([], [], color="#9ecae1"))
    labels.append("very-low/high cut")
    ax.legend(handles, labels, fontsize=8)
    ax.set_title(f"{series.test} over time")
    fig.autofmt_xdate(rotation=60)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_activity_chart(path: timeline.ClinicalPath, out_path: str | Path) -> Path:
    """Counts of tests and relevant changes per day."""
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(9, 3))
    days = [a.day for a in path.activity]
    ax.plot(days, [a.test_count for a in path.activity],
            color="#1f77b4", linewidth=1.2, label="tests")
    ax.plot(days, [a.relevant_change_count for a in path.activity],
            color=RELEVANT_COLOR, linewidth=1.2, label="relevant changes")
    ax.legend(fontsize=8)
    ax.set_title(f"Activity — patient {path.patient.patient_id}")
    fig.autofmt_xdate(rotation=60)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def write_report(
    dataset: Dataset,
    patient_id: str,
    options: timeline.PathOptions,
    out_dir: str | Path,
    tests: list[str] | None = None,
    threshold_percent: float = analytics.DEFAULT_THRESHOLD_PERCENT,
    separator: str = "|",
) -> list[Path]:
    """Write the delimited path export plus figures; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = timeline.build_clinical_path(dataset, patient_id, options, threshold_percent)

    written: list[Path] = []
    table = out_dir / f"{patient_id}_path.txt"
    with open(table, "w", encoding="utf-8", newline="") as fh:
        timeline.export_path_delimited(path, fh, separator)
    written.append(table)

    written.append(render_path_matrix(path, out_dir / f"{patient_id}_path.png"))
    if path.activity:
        written.append(render_activity_chart(path, out_dir / f"{patient_id}_activity.png"))
    for test in tests or []:
        series = analytics.test_series(
            dataset, patient_id, test,
            options.date_from, options.date_to, threshold_percent,
        )
        safe = "".join(ch if ch.isalnum() else "_" for ch in test)
        written.append(render_series_chart(series, out_dir / f"{patient_id}_{safe}_series.png"))
    return written
