"""Shared domain types and the canonical test-group ordering table.

Everything here is an immutable value type; instances are safe to share
across threads once constructed. Presentation attributes (symbols, default
colors) are carried alongside the enums but never participate in
classification logic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date
from enum import Enum, IntEnum
from pathlib import Path


class Sex(Enum):
    FEMALE = "F"
    MALE = "M"
    UNKNOWN = "unknown"


class DayStatus(Enum):
    """Care context of a patient on one calendar day."""

    HOSPITALIZED = "hospitalized"
    EXTERNAL_SERVICE = "external_service"
    OUTPATIENT_CARE = "outpatient_care"
    DISCHARGED = "discharged"
    DIED = "died"
    UNKNOWN = "unknown"


# Default day-status colors (user-overridable through PresentationConfig).
DEFAULT_STATUS_COLORS: dict[DayStatus, str] = {
    DayStatus.HOSPITALIZED: "#d62728",      # red
    DayStatus.EXTERNAL_SERVICE: "#2ca02c",  # green
    DayStatus.OUTPATIENT_CARE: "#1f77b4",   # blue
    DayStatus.DISCHARGED: "#ffd43b",        # yellow
    DayStatus.DIED: "#ff7f0e",              # orange
    DayStatus.UNKNOWN: "#bdbdbd",           # neutral gray
}


class ResultCategory(IntEnum):
    """Five-valued abnormality band, totally ordered from VERY_LOW to VERY_HIGH."""

    VERY_LOW = 0
    LOW = 1
    NORMAL = 2
    HIGH = 3
    VERY_HIGH = 4

    @property
    def code(self) -> str:
        return _CATEGORY_CODES[self]

    @property
    def symbol(self) -> str:
        """Symbol id for redundant shape coding (one per band)."""
        return _CATEGORY_SYMBOLS[self]

    @property
    def default_color(self) -> str:
        return DEFAULT_CATEGORY_COLORS[self]

    @classmethod
    def from_code(cls, code: str) -> "ResultCategory":
        return _CATEGORY_BY_CODE[code]


_CATEGORY_CODES: dict[ResultCategory, str] = {
    ResultCategory.VERY_LOW: "very_low",
    ResultCategory.LOW: "low",
    ResultCategory.NORMAL: "normal",
    ResultCategory.HIGH: "high",
    ResultCategory.VERY_HIGH: "very_high",
}
_CATEGORY_BY_CODE = {code: cat for cat, code in _CATEGORY_CODES.items()}

_CATEGORY_SYMBOLS: dict[ResultCategory, str] = {
    ResultCategory.VERY_LOW: "double-down",
    ResultCategory.LOW: "down",
    ResultCategory.NORMAL: "check",
    ResultCategory.HIGH: "up",
    ResultCategory.VERY_HIGH: "double-up",
}

# Temperature-style defaults: blues for low bands, reds for high bands.
DEFAULT_CATEGORY_COLORS: dict[ResultCategory, str] = {
    ResultCategory.VERY_LOW: "#0571b0",
    ResultCategory.LOW: "#92c5de",
    ResultCategory.NORMAL: "#2ca02c",
    ResultCategory.HIGH: "#f4a582",
    ResultCategory.VERY_HIGH: "#ca0020",
}


def category_of_order(category: ResultCategory) -> int:
    """Position of a category in the total order: VERY_LOW→0 … VERY_HIGH→4."""
    return int(category)


@dataclass(frozen=True)
class Patient:
    """Patient meta plus the per-day care status map.

    `age` is integer years or None when unknown. `day_status` holds only the
    days with a known status; absent days read as DayStatus.UNKNOWN.
    """

    patient_id: str
    sex: Sex = Sex.UNKNOWN
    age: int | None = None
    day_status: dict[date, DayStatus] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.patient_id:
            raise ValueError("patient_id must be non-empty")
        if self.age is not None and self.age < 0:
            raise ValueError("age must be >= 0")

    def status_on(self, day: date) -> DayStatus:
        return self.day_status.get(day, DayStatus.UNKNOWN)


@dataclass(frozen=True)
class LabResult:
    """One normalized test measurement, one-day resolution, canonical units.

    Reference bounds travel with the record: they may differ between records
    of the same test (risk-group dependent ranges).
    """

    patient_id: str
    day: date
    test: str
    value: float
    unit: str
    ref_min: float
    ref_max: float
    institution: str = ""

    def __post_init__(self) -> None:
        if self.ref_min > self.ref_max:
            raise ValueError(f"ref_min {self.ref_min} > ref_max {self.ref_max}")
        if not math.isfinite(self.value):
            raise ValueError("value must be finite")

    @property
    def sort_key(self) -> tuple[str, str, date]:
        return (self.patient_id, self.test, self.day)


@dataclass(frozen=True)
class ChangeObservation:
    """A consecutive-result pair with its percentage rate of change.

    `rc_percent` may be ±inf (appearance from a zero baseline). The flag is
    redundant with the stored threshold: relevant == (|rc| >= threshold).
    """

    v_earlier: float
    v_later: float
    rc_percent: float
    relevant: bool
    threshold_percent: float = 100.0


@dataclass(frozen=True)
class TestGroup:
    """A named, ranked group of test acronyms in fixed row order."""

    name: str
    acronyms: tuple[str, ...]
    rank: int


UNCATEGORIZED_GROUP = "Uncategorized"

# Canonical grouping, general-first (hemogram) to specialty (COVID). Synonym
# spellings (VCM, cTnT, TNFa) are resolved by the ingest rules, so each
# acronym appears exactly once.
_GROUP_TABLE: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("Red Series Hemogram", ("RBC", "Hb", "HCT", "MCV", "MCH", "MCHC", "RDW")),
    ("White Series Hemogram", (
        "WBC", "basophil#", "basophil%", "eos#", "eos%", "lymphocyte#",
        "lymphocyte%", "monocyte#", "monocyte%", "neutrophil#", "neutrophil%",
    )),
    ("Hemogram - Platelets", ("PLT",)),
    ("Medium Platelet Volume", ("MPV",)),
    ("Liver Function / Coagulation Factors", (
        "aPTT", "AT", "PT", "TT", "ALP", "ALT", "AST", "BILC", "BILU",
        "PT%", "D-D", "fibrinogen", "GGT", "TBIL", "albumin",
    )),
    ("Liver Function", ("eGFR", "creatinine", "urea")),
    ("Ion Evaluation", ("Ca", "Ca++", "Ca++F", "Cl-", "HCO3-", "K+", "Na+", "pH")),
    ("Cardio Evaluation", ("cTnI", "hs-cTnT", "NT-proBNP")),
    ("Inflammatory Evaluation", (
        "CRP", "PCT", "ESR", "globulin", "IL-6", "IL-10", "TNF", "LDH",
    )),
    ("Endocrine Evaluation", ("glucose", "HbA1c", "TSH", "PTH")),
    ("General Evaluation", ("cholesterol", "ferritin", "protein")),
    ("COVID", ("covid_pcr", "covid_iga", "covid_soro", "covid_igg", "covid_igm")),
)


def default_group_table() -> list[TestGroup]:
    """The canonical group ordering, duplicate-free, in table order."""
    return [TestGroup(name, acronyms, rank) for rank, (name, acronyms) in enumerate(_GROUP_TABLE)]


def load_group_table(path: str | Path) -> list[TestGroup]:
    """Load an alternative group ordering from a JSON config file.

    Expected shape: {"groups": [{"name": str, "rank": int, "acronyms": [str, ...]}, ...]}.
    Acronyms must be unique across groups.
    """
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    groups = []
    seen: set[str] = set()
    for entry in raw.get("groups", []):
        acronyms = tuple(entry["acronyms"])
        dupes = seen.intersection(acronyms)
        if dupes or len(set(acronyms)) != len(acronyms):
            raise ValueError(f"duplicate acronyms in group table: {sorted(dupes) or acronyms}")
        seen.update(acronyms)
        groups.append(TestGroup(entry["name"], acronyms, int(entry["rank"])))
    groups.sort(key=lambda g: g.rank)
    if not groups:
        raise ValueError(f"no groups defined in {path}")
    return groups


def lookup_test(acronym: str, groups: list[TestGroup] | None = None) -> tuple[TestGroup, int] | None:
    """Find the group and row index of a canonical acronym, or None."""
    for group in groups if groups is not None else default_group_table():
        if acronym in group.acronyms:
            return group, group.acronyms.index(acronym)
    return None


def row_sort_key(acronym: str, groups: list[TestGroup] | None = None) -> tuple[int, int, str]:
    """Ordering key for timeline rows: group rank, then table row order.

    Tests absent from every group sort into a trailing bucket, alphabetically.
    """
    found = lookup_test(acronym, groups)
    if found is None:
        n = len(groups) if groups is not None else len(_GROUP_TABLE)
        return (n, 0, acronym)
    group, index = found
    return (group.rank, index, "")


def group_name_of(acronym: str, groups: list[TestGroup] | None = None) -> str:
    found = lookup_test(acronym, groups)
    return found[0].name if found else UNCATEGORIZED_GROUP
