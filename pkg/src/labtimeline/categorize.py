"""Five-band categorization of results against per-record reference ranges.

The low and high cut points splitting Low/VeryLow and High/VeryHigh are
plain medians of the population's out-of-range subsets for each test,
computed once per dataset. Because reference ranges vary per record while
cuts are population-global, the effective cut is clamped against each
record's own bounds (max on the high side, min on the low side) so a value
inside its own reference range can never land in a Very band.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass
from typing import IO, TYPE_CHECKING

from .model import LabResult, ResultCategory

if TYPE_CHECKING:
    from .store import Dataset


@dataclass(frozen=True)
class ReferenceCuts:
    """Per-test population cut points; None means the subset was empty."""

    test: str
    low_cut: float | None = None
    high_cut: float | None = None


def compute_cuts(dataset: "Dataset") -> dict[str, ReferenceCuts]:
    """Median of below-range and above-range value subsets, per test.

    Subset membership uses each record's own reference bounds (strictly
    outside). Even-sized subsets take the mean of the two central values.
    """
    low: dict[str, list[float]] = {}
    high: dict[str, list[float]] = {}
    tests: set[str] = set()
    for r in dataset.results:
        tests.add(r.test)
        if r.value < r.ref_min:
            low.setdefault(r.test, []).append(r.value)
        elif r.value > r.ref_max:
            high.setdefault(r.test, []).append(r.value)
    return {
        test: ReferenceCuts(
            test=test,
            low_cut=statistics.median(low[test]) if test in low else None,
            high_cut=statistics.median(high[test]) if test in high else None,
        )
        for test in sorted(tests)
    }


def categorize(
    value: float,
    ref_min: float,
    ref_max: float,
    cuts: ReferenceCuts | None = None,
) -> ResultCategory:
    """Classify one value against its record's bounds and the test's cuts.

    Normal is inclusive of both bounds. Beyond them, a value stays High/Low
    up to and including the (clamped) cut and becomes VeryHigh/VeryLow only
    strictly past it. Missing cuts mean the band never escalates to Very.
    """
    if not math.isfinite(value):
        raise ValueError("value must be finite; non-finite records are rejected at ingest")
    if ref_min <= value <= ref_max:
        return ResultCategory.NORMAL
    if value > ref_max:
        high_cut = cuts.high_cut if cuts else None
        if high_cut is None or value <= max(high_cut, ref_max):
            return ResultCategory.HIGH
        return ResultCategory.VERY_HIGH
    low_cut = cuts.low_cut if cuts else None
    if low_cut is None or value >= min(low_cut, ref_min):
        return ResultCategory.LOW
    return ResultCategory.VERY_LOW


def categorize_result(result: LabResult, cuts: dict[str, ReferenceCuts]) -> ResultCategory:
    return categorize(result.value, result.ref_min, result.ref_max, cuts.get(result.test))


def export_cuts(cuts: dict[str, ReferenceCuts], dest: IO[str], separator: str = "|") -> None:
    """Audit export: test, low_cut, high_cut (blank when absent)."""
    writer = csv.writer(dest, delimiter=separator, lineterminator="\n")
    writer.writerow(["test", "low_cut", "high_cut"])
    for test in sorted(cuts):
        c = cuts[test]
        writer.writerow([
            test,
            "" if c.low_cut is None else repr(c.low_cut),
            "" if c.high_cut is None else repr(c.high_cut),
        ])
