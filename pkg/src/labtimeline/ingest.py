"""Raw-export parsing and normalization into canonical LabResults.

Real per-institution exports are messy: vocabularies and spellings differ,
units come at assorted scales, decimals use commas or points, dates arrive
in Brazilian or ISO form. Everything unusable is rejected with a reason,
never silently dropped, so that record counts always reconcile:

    rows in == results kept + rejections + duplicates dropped
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import IO, Iterable

from .model import DayStatus, LabResult, Patient, Sex

DEFAULT_SEPARATOR = "|"

RESULT_COLUMNS = (
    "patient_id", "date", "test_name", "analyte", "value",
    "unit", "ref_min", "ref_max", "institution",
)


class RejectReason(Enum):
    MISSING_FIELD = "MissingField"
    UNPARSEABLE_VALUE = "UnparseableValue"
    UNPARSEABLE_DATE = "UnparseableDate"
    UNKNOWN_TEST = "UnknownTest"
    UNKNOWN_UNIT = "UnknownUnit"
    MISSING_REFERENCE = "MissingReference"


@dataclass(frozen=True)
class RawRecord:
    """One uninterpreted row of a result export."""

    institution: str
    patient_id: str
    date_text: str
    test_name_raw: str
    analyte_raw: str
    value_text: str
    unit_text: str
    ref_min_text: str
    ref_max_text: str


@dataclass(frozen=True)
class Rejection:
    raw: RawRecord
    reason: RejectReason


# Punctuation that is pure noise in test names. The semantic characters
# # % + - / stay: they distinguish PT from PT%, Ca from Ca++, basophil#
# from basophil%.
_NOISE_CHARS = re.compile(r"[.,;:()\[\]{}'\"_*?!]")
_WS = re.compile(r"\s+")


def normalize_key(text: str) -> str:
    """Lookup key for test/analyte names: casefolded, accent- and noise-free."""
    text = unicodedata.normalize("NFKD", text)
    text = "".join(ch for ch in text if not unicodedata.combining(ch))
    text = _NOISE_CHARS.sub("", text)
    return _WS.sub(" ", text).strip().casefold()


def normalize_unit_key(text: str) -> str:
    """Lookup key for unit strings; micro signs map to 'u', spaces vanish."""
    text = unicodedata.normalize("NFKD", text)
    text = "".join(ch for ch in text if not unicodedata.combining(ch))
    text = text.replace("µ", "u").replace("μ", "u").replace("×", "x")
    return _WS.sub("", text).casefold()


@dataclass(frozen=True)
class NormalizationRules:
    """Synonym, unit, reference and status dictionaries for one rules version.

    `synonym_map` is keyed by `normalize_key` output and is idempotent on
    canonical acronyms (each canonical name maps to itself). `unit_map` is
    keyed by (canonical acronym, normalized raw unit) and yields a
    multiplicative factor into the canonical unit.
    """

    version: str
    synonym_map: dict[str, str]
    canonical_units: dict[str, str]
    unit_map: dict[tuple[str, str], float]
    default_refs: dict[str, tuple[float, float]]
    status_map: dict[str, DayStatus]
    sex_map: dict[str, Sex]
    date_formats: tuple[str, ...] = ("%d/%m/%Y", "%Y-%m-%d")

    def resolve_test(self, name: str) -> str | None:
        return self.synonym_map.get(normalize_key(name))

    def resolve_status(self, text: str) -> DayStatus:
        return self.status_map.get(normalize_key(text), DayStatus.UNKNOWN)

    def resolve_sex(self, text: str) -> Sex:
        return self.sex_map.get(normalize_key(text), Sex.UNKNOWN)


def load_rules(path: str | Path | None = None) -> NormalizationRules:
    """Load the rules config; without a path, the packaged default set."""
    if path is None:
        payload = json.loads(
            resources.files("labtimeline").joinpath("data/default_rules.json").read_text("utf-8")
        )
    else:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    return _rules_from_payload(payload)


def _rules_from_payload(payload: dict) -> NormalizationRules:
    synonym_map: dict[str, str] = {}
    canonical_units: dict[str, str] = {}
    unit_map: dict[tuple[str, str], float] = {}
    for test, entry in payload.get("tests", {}).items():
        synonym_map[normalize_key(test)] = test
        unit = entry.get("unit", "")
        canonical_units[test] = unit
        unit_map[(test, normalize_unit_key(unit))] = 1.0
        for raw_unit, factor in entry.get("units", {}).items():
            factor = float(factor)
            if factor <= 0:
                raise ValueError(f"unit factor for {test}/{raw_unit} must be > 0")
            unit_map[(test, normalize_unit_key(raw_unit))] = factor
    for raw_name, canonical in payload.get("synonyms", {}).items():
        if canonical not in canonical_units:
            raise ValueError(f"synonym {raw_name!r} targets unknown test {canonical!r}")
        synonym_map[normalize_key(raw_name)] = canonical
    default_refs = {
        test: (float(lo), float(hi))
        for test, (lo, hi) in payload.get("default_refs", {}).items()
    }
    status_map = {
        normalize_key(text): DayStatus(code)
        for text, code in payload.get("statuses", {}).items()
    }
    sex_map = {
        normalize_key(text): Sex(code) for text, code in payload.get("sexes", {}).items()
    }
    return NormalizationRules(
        version=str(payload.get("version", "0")),
        synonym_map=synonym_map,
        canonical_units=canonical_units,
        unit_map=unit_map,
        default_refs=default_refs,
        status_map=status_map,
        sex_map=sex_map,
        date_formats=tuple(payload.get("date_formats", ("%d/%m/%Y", "%Y-%m-%d"))),
    )


_DECIMAL = re.compile(r"^[+-]?\d+$|^[+-]?\d*[.,]\d+$|^[+-]?\d+[.,]\d*$")


def parse_decimal(text: str) -> float | None:
    """Parse a decimal accepting both comma and point separators.

    When both appear ("1.234,56"), the rightmost one is the decimal mark and
    the others are thousands separators. Returns None when unparseable or
    non-finite.
    """
    text = text.strip()
    if "," in text and "." in text:
        last_comma, last_dot = text.rfind(","), text.rfind(".")
        if last_comma > last_dot:
            text = text.replace(".", "").replace(",", ".")
        else:
            text = text.replace(",", "")
    if not _DECIMAL.match(text):
        return None
    try:
        value = float(text.replace(",", "."))
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def parse_day(text: str, formats: Iterable[str] = ("%d/%m/%Y", "%Y-%m-%d")) -> date | None:
    """Parse a calendar day; ISO datetimes are truncated to the day."""
    text = text.strip()
    if not text:
        return None
    for fmt in formats:
        try:
            return datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    try:
        return datetime.fromisoformat(text).date()
    except ValueError:
        return None


def parse_raw_file(
    source: IO[bytes] | IO[str],
    institution: str = "",
    separator: str = DEFAULT_SEPARATOR,
) -> tuple[list[RawRecord], list[Rejection]]:
    """Read one delimited result export into RawRecords.

    The first row is the header and is skipped. Rows with a wrong column
    count become MissingField rejections. The institution argument fills
    rows whose own institution column is blank.
    """
    if hasattr(source, "read") and isinstance(source.read(0), bytes):
        source = io.TextIOWrapper(source, encoding="utf-8", newline="")
    reader = csv.reader(source, delimiter=separator)
    records: list[RawRecord] = []
    rejections: list[Rejection] = []
    for i, row in enumerate(reader):
        if i == 0:
            continue  # header
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        cells = [cell.strip() for cell in row]
        if len(cells) != len(RESULT_COLUMNS):
            cells = (cells + [""] * len(RESULT_COLUMNS))[: len(RESULT_COLUMNS)]
            raw = RawRecord(cells[8] or institution, cells[0], cells[1], cells[2],
                            cells[3], cells[4], cells[5], cells[6], cells[7])
            rejections.append(Rejection(raw, RejectReason.MISSING_FIELD))
            continue
        records.append(RawRecord(
            institution=cells[8] or institution,
            patient_id=cells[0],
            date_text=cells[1],
            test_name_raw=cells[2],
            analyte_raw=cells[3],
            value_text=cells[4],
            unit_text=cells[5],
            ref_min_text=cells[6],
            ref_max_text=cells[7],
        ))
    return records, rejections


def parse_raw_files(
    paths: Iterable[str | Path],
    separator: str = DEFAULT_SEPARATOR,
    max_workers: int | None = None,
) -> tuple[list[RawRecord], list[Rejection]]:
    """Parse several exports, one worker per file; output follows input order."""
    paths = list(paths)

    def one(path: str | Path) -> tuple[list[RawRecord], list[Rejection]]:
        with open(path, "rb") as fh:
            return parse_raw_file(fh, institution=Path(path).stem, separator=separator)

    records: list[RawRecord] = []
    rejections: list[Rejection] = []
    if len(paths) <= 1:
        parsed = map(one, paths)
    else:
        with ThreadPoolExecutor(max_workers=max_workers or len(paths)) as pool:
            parsed = list(pool.map(one, paths))
    for recs, rejs in parsed:
        records.extend(recs)
        rejections.extend(rejs)
    return records, rejections


def normalize_record(raw: RawRecord, rules: NormalizationRules) -> LabResult | Rejection:
    """Resolve one RawRecord to a canonical LabResult, or reject it.

    The test name is resolved through the synonym map (falling back to the
    analyte column), the value and reference bounds are rescaled into the
    canonical unit, and the date is truncated to a calendar day. Binary
    detection tests without native bounds pick up their synthetic range from
    the rules' default_refs.
    """
    if not raw.patient_id or not (raw.test_name_raw or raw.analyte_raw):
        return Rejection(raw, RejectReason.MISSING_FIELD)

    test = rules.resolve_test(raw.test_name_raw)
    if test is None and raw.analyte_raw:
        test = rules.resolve_test(raw.analyte_raw)
    if test is None:
        return Rejection(raw, RejectReason.UNKNOWN_TEST)

    day = parse_day(raw.date_text, rules.date_formats)
    if day is None:
        return Rejection(raw, RejectReason.UNPARSEABLE_DATE)

    value = parse_decimal(raw.value_text)
    if value is None:
        return Rejection(raw, RejectReason.UNPARSEABLE_VALUE)

    factor = rules.unit_map.get((test, normalize_unit_key(raw.unit_text)))
    if factor is None:
        if not raw.unit_text.strip():
            factor = 1.0  # unitless or trusted-canonical export
        else:
            return Rejection(raw, RejectReason.UNKNOWN_UNIT)

    ref_min_text, ref_max_text = raw.ref_min_text.strip(), raw.ref_max_text.strip()
    ref_min = parse_decimal(ref_min_text) if ref_min_text else None
    ref_max = parse_decimal(ref_max_text) if ref_max_text else None
    if (ref_min_text and ref_min is None) or (ref_max_text and ref_max is None):
        return Rejection(raw, RejectReason.MISSING_REFERENCE)
    if ref_min is None and ref_max is None and test in rules.default_refs:
        lo, hi = rules.default_refs[test]
        return _build_result(raw, test, day, value * factor, lo, hi, rules)
    if ref_min is None or ref_max is None:
        return Rejection(raw, RejectReason.MISSING_REFERENCE)
    return _build_result(raw, test, day, value * factor, ref_min * factor, ref_max * factor, rules)


def _build_result(
    raw: RawRecord, test: str, day: date, value: float,
    ref_min: float, ref_max: float, rules: NormalizationRules,
) -> LabResult | Rejection:
    if ref_min > ref_max:
        return Rejection(raw, RejectReason.MISSING_REFERENCE)
    return LabResult(
        patient_id=raw.patient_id,
        day=day,
        test=test,
        value=value,
        unit=rules.canonical_units.get(test, ""),
        ref_min=ref_min,
        ref_max=ref_max,
        institution=raw.institution,
    )


@dataclass(frozen=True)
class DuplicateEntry:
    patient_id: str
    test: str
    day: date
    dropped_value: float
    kept_value: float


@dataclass
class DuplicateReport:
    entries: list[DuplicateEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)


def clean_dataset(
    records: Iterable[LabResult],
    patients: dict[str, Patient] | None = None,
    rules_version: str = "",
):
    """Deduplicate to one result per (patient, test, day) and sort.

    Later records win collisions (input order). Patients referenced by a
    result but absent from `patients` are created with Unknown meta, so the
    dataset invariant (every result's patient exists) always holds.
    Returns (Dataset, DuplicateReport); the dataset carries no cuts yet.
    """
    from .store import Dataset  # local import: store builds on this module

    kept: dict[tuple[str, str, date], LabResult] = {}
    report = DuplicateReport()
    for record in records:
        key = (record.patient_id, record.test, record.day)
        previous = kept.get(key)
        if previous is not None:
            report.entries.append(DuplicateEntry(
                record.patient_id, record.test, record.day,
                dropped_value=previous.value, kept_value=record.value,
            ))
        kept[key] = record

    results = sorted(kept.values(), key=lambda r: r.sort_key)
    all_patients = dict(patients or {})
    for record in results:
        if record.patient_id not in all_patients:
            all_patients[record.patient_id] = Patient(record.patient_id)
    dataset = Dataset(
        patients=all_patients,
        results=results,
        cuts={},
        rules_version=rules_version,
    )
    return dataset, report


# ---------------------------------------------------------------------------
# Patient meta and outcome files

@dataclass(frozen=True)
class PatientMetaRow:
    patient_id: str
    sex: Sex
    birth_year_or_age: int | None


def parse_patient_meta(
    source: IO[str], rules: NormalizationRules, separator: str = DEFAULT_SEPARATOR
) -> list[PatientMetaRow]:
    """Parse the patient meta file: patient_id, sex, birth_year_or_age."""
    reader = csv.reader(source, delimiter=separator)
    rows: list[PatientMetaRow] = []
    for i, row in enumerate(reader):
        if i == 0 or not row or not row[0].strip():
            continue
        cells = [cell.strip() for cell in row] + ["", ""]
        number = parse_decimal(cells[2]) if cells[2] else None
        rows.append(PatientMetaRow(
            patient_id=cells[0],
            sex=rules.resolve_sex(cells[1]),
            birth_year_or_age=int(number) if number is not None else None,
        ))
    return rows


def resolve_age(birth_year_or_age: int | None, as_of_year: int | None) -> int | None:
    """Interpret the meta column: <150 is an age, 1000..9999 a birth year."""
    if birth_year_or_age is None:
        return None
    if 0 <= birth_year_or_age < 150:
        return birth_year_or_age
    if 1000 <= birth_year_or_age <= 9999 and as_of_year is not None:
        return max(0, as_of_year - birth_year_or_age)
    return None


def parse_outcomes(
    source: IO[str], rules: NormalizationRules, separator: str = DEFAULT_SEPARATOR
) -> dict[str, dict[date, DayStatus]]:
    """Parse the outcome file (patient_id, date, status_text) into status maps."""
    reader = csv.reader(source, delimiter=separator)
    statuses: dict[str, dict[date, DayStatus]] = {}
    for i, row in enumerate(reader):
        if i == 0 or not row or not row[0].strip():
            continue
        cells = [cell.strip() for cell in row] + ["", ""]
        day = parse_day(cells[1], rules.date_formats)
        if day is None:
            continue
        statuses.setdefault(cells[0], {})[day] = rules.resolve_status(cells[2])
    return statuses


def build_patients(
    meta_rows: Iterable[PatientMetaRow],
    statuses: dict[str, dict[date, DayStatus]],
    as_of_year: int | None,
) -> dict[str, Patient]:
    """Join meta and outcome rows into Patient objects."""
    patients: dict[str, Patient] = {}
    for row in meta_rows:
        patients[row.patient_id] = Patient(
            patient_id=row.patient_id,
            sex=row.sex,
            age=resolve_age(row.birth_year_or_age, as_of_year),
            day_status=dict(statuses.get(row.patient_id, {})),
        )
    for patient_id, day_map in statuses.items():
        if patient_id not in patients:
            patients[patient_id] = Patient(patient_id, day_status=dict(day_map))
    return patients


# ---------------------------------------------------------------------------
# Reports

def write_rejection_report(
    rejections: Iterable[Rejection], dest: IO[str], separator: str = DEFAULT_SEPARATOR
) -> None:
    """Write the rejection report: original columns plus the reason code."""
    writer = csv.writer(dest, delimiter=separator, lineterminator="\n")
    writer.writerow(list(RESULT_COLUMNS) + ["reason"])
    for rej in rejections:
        r = rej.raw
        writer.writerow([
            r.patient_id, r.date_text, r.test_name_raw, r.analyte_raw, r.value_text,
            r.unit_text, r.ref_min_text, r.ref_max_text, r.institution,
            rej.reason.value,
        ])


@dataclass
class IngestReport:
    """Counts for one ingest run; conservation: rows_in == kept + rejected + duplicates."""

    rows_in: int = 0
    kept: int = 0
    duplicates: int = 0
    rejected_by_reason: dict[str, int] = field(default_factory=dict)

    @property
    def rejected(self) -> int:
        return sum(self.rejected_by_reason.values())

    def lines(self) -> list[str]:
        out = [
            f"rows in:    {self.rows_in}",
            f"kept:       {self.kept}",
            f"duplicates: {self.duplicates}",
            f"rejected:   {self.rejected}",
        ]
        out.extend(
            f"  {reason}: {count}"
            for reason, count in sorted(self.rejected_by_reason.items())
        )
        return out


def ingest_files(
    result_paths: Iterable[str | Path],
    rules: NormalizationRules,
    meta_path: str | Path | None = None,
    outcome_path: str | Path | None = None,
    separator: str = DEFAULT_SEPARATOR,
):
    """Full pipeline: parse, normalize, clean, compute cuts.

    Returns (Dataset, IngestReport, rejections).
    """
    from .categorize import compute_cuts

    raw_records, rejections = parse_raw_files(result_paths, separator=separator)
    rows_in = len(raw_records) + len(rejections)

    results: list[LabResult] = []
    for raw in raw_records:
        outcome = normalize_record(raw, rules)
        if isinstance(outcome, Rejection):
            rejections.append(outcome)
        else:
            results.append(outcome)

    as_of_year = max((r.day for r in results), default=None)
    as_of_year = as_of_year.year if as_of_year else None
    meta_rows: list[PatientMetaRow] = []
    statuses: dict[str, dict[date, DayStatus]] = {}
    if meta_path is not None:
        with open(meta_path, encoding="utf-8", newline="") as fh:
            meta_rows = parse_patient_meta(fh, rules, separator)
    if outcome_path is not None:
        with open(outcome_path, encoding="utf-8", newline="") as fh:
            statuses = parse_outcomes(fh, rules, separator)
    patients = build_patients(meta_rows, statuses, as_of_year)

    dataset, dup_report = clean_dataset(results, patients, rules_version=rules.version)
    dataset = dataset.with_cuts(compute_cuts(dataset))

    report = IngestReport(rows_in=rows_in, kept=len(dataset.results), duplicates=len(dup_report))
    for rej in rejections:
        reason = rej.reason.value
        report.rejected_by_reason[reason] = report.rejected_by_reason.get(reason, 0) + 1
    return dataset, report, rejections
