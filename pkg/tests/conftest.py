from __future__ import annotations

import sys
from datetime import date
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for oracles.py

from labtimeline.categorize import compute_cuts
from labtimeline.ingest import clean_dataset, load_rules
from labtimeline.model import DayStatus, LabResult, Patient, Sex


def d(day: int, month: int = 3, year: int = 2020) -> date:
    return date(year, month, day)


def mcv(pid: str, day: date, value: float, ref=(80.0, 96.0)) -> LabResult:
    return LabResult(pid, day, "MCV", value, "fL", ref[0], ref[1], "HF3")


def hb(pid: str, day: date, value: float, ref=(12.0, 16.0)) -> LabResult:
    return LabResult(pid, day, "Hb", value, "g/dL", ref[0], ref[1], "HF3")


@pytest.fixture(scope="session")
def rules():
    return load_rules()


@pytest.fixture()
def small_dataset():
    """Two patients with hand-checkable MCV and Hb histories.

    MCV above-range values are {97.6, 98.0, 98.8, 99.0, 101.0} → high cut
    98.8; below-range {70, 75} → low cut 72.5. Hb below-range values are
    {5.0, 10.6, 11.0} → low cut 10.6; above-range {17.0} → high cut 17.0.
    """
    results = [
        mcv("PA1", d(1), 90.0),
        mcv("PA1", d(2), 97.6),
        mcv("PA1", d(3), 99.0),
        mcv("PA1", d(4), 98.0),
        hb("PA1", d(1), 13.0),
        hb("PA1", d(2), 5.0),
        hb("PA1", d(3), 10.6),
        hb("PA1", d(4), 11.0),
        mcv("PB2", d(1), 98.8),
        mcv("PB2", d(2), 101.0),
        mcv("PB2", d(3), 70.0),
        mcv("PB2", d(4), 75.0),
        mcv("PB2", d(5), 85.0),
        hb("PB2", d(1), 17.0),
    ]
    patients = {
        "PA1": Patient("PA1", Sex.FEMALE, 63, {
            d(1): DayStatus.HOSPITALIZED,
            d(2): DayStatus.HOSPITALIZED,
            d(3): DayStatus.OUTPATIENT_CARE,
            d(4): DayStatus.DISCHARGED,
        }),
        "PB2": Patient("PB2", Sex.MALE, 30, {d(5): DayStatus.DIED}),
    }
    dataset, report = clean_dataset(results, patients, rules_version="test")
    assert len(report) == 0
    return dataset.with_cuts(compute_cuts(dataset))
