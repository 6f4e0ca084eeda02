"""Dataset container, JSONL persistence, graph export, synthetic data.

The on-disk format is line-delimited JSON — auditable and diffable by
clinicians — with a header object pinning the schema and rules versions.
Cut points are persisted with the dataset rather than recomputed at load,
so categorization stays stable across partial re-ingests.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path
from typing import IO, Iterable, Sequence

from .categorize import ReferenceCuts, categorize_result, compute_cuts
from .errors import FormatError, VersionError
from .model import DayStatus, LabResult, Patient, Sex, default_group_table

SCHEMA_VERSION = "1.0"


@dataclass(frozen=True)
class Dataset:
    """Immutable normalized dataset: patients, day-resolution results, cuts.

    Results are sorted by (patient_id, test, day) with at most one result
    per key; every result's patient exists in `patients`.
    """

    patients: dict[str, Patient]
    results: list[LabResult]
    cuts: dict[str, ReferenceCuts] = field(default_factory=dict)
    rules_version: str = ""
    _index: dict[str, dict[str, list[LabResult]]] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        index: dict[str, dict[str, list[LabResult]]] = {}
        for r in self.results:
            index.setdefault(r.patient_id, {}).setdefault(r.test, []).append(r)
        for tests in index.values():
            for series in tests.values():
                series.sort(key=lambda r: r.day)
        object.__setattr__(self, "_index", index)

    def tests_of(self, patient_id: str) -> list[str]:
        return sorted(self._index.get(patient_id, {}))

    def results_for(self, patient_id: str, test: str | None = None) -> list[LabResult]:
        """Day-sorted results of one patient, optionally for a single test."""
        tests = self._index.get(patient_id, {})
        if test is not None:
            return list(tests.get(test, []))
        return [r for series in tests.values() for r in series]

    def with_cuts(self, cuts: dict[str, ReferenceCuts]) -> "Dataset":
        return replace(self, cuts=cuts)

    def validate(self) -> list[str]:
        """All dataset invariants; returns one message per violation."""
        problems: list[str] = []
        for i, r in enumerate(self.results):
            if r.patient_id not in self.patients:
                problems.append(f"result {i}: patient {r.patient_id!r} not in patients")
        keys = [r.sort_key for r in self.results]
        if keys != sorted(keys):
            problems.append("results are not sorted by (patient_id, test, day)")
        if len(set(keys)) != len(keys):
            seen: set = set()
            for key in keys:
                if key in seen:
                    problems.append(f"duplicate result for {key}")
                seen.add(key)
        for test, cut in self.cuts.items():
            if cut.test != test:
                problems.append(f"cuts entry {test!r} carries mismatched test {cut.test!r}")
        return problems


# ---------------------------------------------------------------------------
# JSONL persistence

def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save(dataset: Dataset, destination: str | Path | IO[str]) -> None:
    """Write the dataset as line-delimited JSON (header first, bit-stable order)."""
    if hasattr(destination, "write"):
        _write_jsonl(dataset, destination)
        return
    with open(destination, "w", encoding="utf-8", newline="\n") as fh:
        _write_jsonl(dataset, fh)


def _write_jsonl(dataset: Dataset, fh: IO[str]) -> None:
    fh.write(_dump({
        "kind": "header",
        "schema": SCHEMA_VERSION,
        "rules_version": dataset.rules_version,
        "counts": {
            "patients": len(dataset.patients),
            "results": len(dataset.results),
            "cuts": len(dataset.cuts),
        },
    }) + "\n")
    for pid in sorted(dataset.patients):
        p = dataset.patients[pid]
        fh.write(_dump({
            "kind": "patient",
            "patient_id": p.patient_id,
            "sex": p.sex.value,
            "age": p.age,
            "day_status": {d.isoformat(): s.value for d, s in sorted(p.day_status.items())},
        }) + "\n")
    for r in dataset.results:
        fh.write(_dump({
            "kind": "result",
            "patient_id": r.patient_id,
            "day": r.day.isoformat(),
            "test": r.test,
            "value": r.value,
            "unit": r.unit,
            "ref_min": r.ref_min,
            "ref_max": r.ref_max,
            "institution": r.institution,
        }) + "\n")
    for test in sorted(dataset.cuts):
        c = dataset.cuts[test]
        fh.write(_dump({
            "kind": "cuts",
            "test": c.test,
            "low_cut": c.low_cut,
            "high_cut": c.high_cut,
        }) + "\n")


def load(source: str | Path | IO[str]) -> Dataset:
    """Read a dataset written by save(); raises FormatError/VersionError."""
    if hasattr(source, "read"):
        return _read_jsonl(source)
    with open(source, encoding="utf-8") as fh:
        return _read_jsonl(fh)


def _read_jsonl(fh: IO[str]) -> Dataset:
    patients: dict[str, Patient] = {}
    results: list[LabResult] = []
    cuts: dict[str, ReferenceCuts] = {}
    rules_version = ""
    saw_header = False
    for lineno, line in enumerate(fh, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON ({exc.msg})", line=lineno) from exc
        try:
            kind = obj["kind"]
            if kind == "header":
                schema = str(obj["schema"])
                if schema.split(".")[0] != SCHEMA_VERSION.split(".")[0]:
                    raise VersionError(
                        f"schema {schema} is incompatible with supported {SCHEMA_VERSION}",
                        line=lineno,
                    )
                rules_version = obj.get("rules_version", "")
                saw_header = True
            elif kind == "patient":
                patients[obj["patient_id"]] = Patient(
                    patient_id=obj["patient_id"],
                    sex=Sex(obj["sex"]),
                    age=obj["age"],
                    day_status={
                        date.fromisoformat(d): DayStatus(s)
                        for d, s in obj["day_status"].items()
                    },
                )
            elif kind == "result":
                results.append(LabResult(
                    patient_id=obj["patient_id"],
                    day=date.fromisoformat(obj["day"]),
                    test=obj["test"],
                    value=float(obj["value"]),
                    unit=obj["unit"],
                    ref_min=float(obj["ref_min"]),
                    ref_max=float(obj["ref_max"]),
                    institution=obj.get("institution", ""),
                ))
            elif kind == "cuts":
                cuts[obj["test"]] = ReferenceCuts(
                    test=obj["test"],
                    low_cut=obj["low_cut"],
                    high_cut=obj["high_cut"],
                )
            else:
                raise FormatError(f"unknown record kind {kind!r}", line=lineno)
        except (KeyError, ValueError, TypeError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"bad record ({exc})", line=lineno) from exc
    if not saw_header:
        raise FormatError("missing header line", line=1)
    return Dataset(patients=patients, results=results, cuts=cuts, rules_version=rules_version)


# ---------------------------------------------------------------------------
# Graph export

def export_graph(dataset: Dataset, destination: str | Path | IO[str]) -> dict:
    """Bipartite graph: patient source nodes, test target nodes, one edge per result.

    Returns the graph dict; edge count equals the result count and node
    count equals |patients| + |distinct tests|.
    """
    tests = sorted({r.test for r in dataset.results})
    nodes = [
        {"id": f"patient:{pid}", "kind": "patient", "label": pid}
        for pid in sorted(dataset.patients)
    ] + [
        {"id": f"test:{t}", "kind": "test", "label": t} for t in tests
    ]
    edges = [
        {
            "source": f"patient:{r.patient_id}",
            "target": f"test:{r.test}",
            "day": r.day.isoformat(),
            "value": r.value,
            "category": categorize_result(r, dataset.cuts).code,
        }
        for r in dataset.results
    ]
    graph = {"nodes": nodes, "edges": edges}
    if hasattr(destination, "write"):
        destination.write(_dump(graph) + "\n")
    else:
        with open(destination, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_dump(graph) + "\n")
    return graph


# ---------------------------------------------------------------------------
# Synthetic data

BINARY_TESTS = frozenset({"covid_iga", "covid_igm", "covid_igg", "covid_pcr", "covid_soro"})

# Plausible base reference ranges for common tests; others are derived
# deterministically from the test name.
_BASE_RANGES: dict[str, tuple[float, float]] = {
    "RBC": (4.0, 5.9), "Hb": (12.0, 16.0), "HCT": (36.0, 46.0), "MCV": (80.0, 96.0),
    "MCH": (27.0, 32.0), "MCHC": (32.0, 36.0), "RDW": (11.5, 14.5),
    "WBC": (4000.0, 11000.0), "PLT": (150000.0, 450000.0), "MPV": (7.5, 11.5),
    "creatinine": (0.6, 1.2), "urea": (10.0, 40.0), "eGFR": (90.0, 120.0),
    "glucose": (70.0, 99.0), "Na+": (135.0, 145.0), "K+": (3.5, 5.0),
    "Cl-": (98.0, 107.0), "HCO3-": (22.0, 28.0), "pH": (7.32, 7.42),
    "Ca": (2.1, 2.6), "albumin": (3.5, 5.2), "TBIL": (0.2, 1.2),
    "CRP": (0.0, 0.5), "aPTT": (25.0, 35.0), "PT": (10.0, 13.0),
}


@dataclass(frozen=True)
class SyntheticSpec:
    """Deterministic generator parameters; same spec + seed → same dataset."""

    n_patients: int
    tests: int | Sequence[str] = 12
    day_span: int = 60
    seed: int = 0
    start_day: date = date(2020, 3, 1)
    fill_rate: float = 0.5
    out_of_range_fraction: float = 0.2
    far_fraction: float = 0.35

    def test_names(self) -> list[str]:
        if isinstance(self.tests, int):
            flat = [a for g in default_group_table() for a in g.acronyms]
            if not 1 <= self.tests <= len(flat):
                raise ValueError(f"tests count must be in 1..{len(flat)}")
            return flat[: self.tests]
        names = list(self.tests)
        if not names:
            raise ValueError("tests must be non-empty")
        return names

    def validate(self) -> None:
        if self.n_patients < 1:
            raise ValueError("n_patients must be >= 1")
        if self.day_span < 1:
            raise ValueError("day_span must be >= 1")
        if not 0.0 < self.fill_rate <= 1.0:
            raise ValueError("fill_rate must be in (0, 1]")
        if not 0.0 <= self.out_of_range_fraction <= 1.0:
            raise ValueError("out_of_range_fraction must be in [0, 1]")
        if not 0.0 <= self.far_fraction <= 1.0:
            raise ValueError("far_fraction must be in [0, 1]")
        self.test_names()


def _base_range(test: str) -> tuple[float, float]:
    if test in _BASE_RANGES:
        return _BASE_RANGES[test]
    rng = random.Random(f"range:{test}")
    lo = round(rng.uniform(0.5, 120.0), 2)
    width = round(lo * rng.uniform(0.25, 0.9) + 0.5, 2)
    return lo, lo + width


_WALK_STATUSES = (
    DayStatus.HOSPITALIZED, DayStatus.OUTPATIENT_CARE,
    DayStatus.EXTERNAL_SERVICE, DayStatus.DISCHARGED,
)


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Reproducible desk-scale dataset with controllable abnormality rates.

    Reference bounds jitter per record around each test's base range, so
    population cuts and per-record clamping are both exercised. With
    out_of_range_fraction 0 every value categorizes Normal.
    """
    from .ingest import load_rules

    spec.validate()
    rng = random.Random(spec.seed)
    tests = spec.test_names()
    days = [spec.start_day + timedelta(days=i) for i in range(spec.day_span)]
    units = load_rules().canonical_units

    results: list[LabResult] = []
    patients: dict[str, Patient] = {}
    width_of = {t: _base_range(t)[1] - _base_range(t)[0] for t in tests}

    for p in range(spec.n_patients):
        pid = f"P{p + 1:05d}"
        sex = rng.choices((Sex.FEMALE, Sex.MALE, Sex.UNKNOWN), weights=(48, 48, 4))[0]
        age = rng.randint(0, 99)
        patient_days: set[date] = set()

        for test in tests:
            base_lo, base_hi = _base_range(test)
            width = width_of[test]
            for day in days:
                if rng.random() >= spec.fill_rate:
                    continue
                patient_days.add(day)
                if test in BINARY_TESTS:
                    value = 1.0 if rng.random() < spec.out_of_range_fraction else 0.0
                    ref_min = ref_max = 0.0
                else:
                    ref_min = round(base_lo + width * rng.uniform(-0.05, 0.05), 4)
                    ref_max = round(base_hi + width * rng.uniform(-0.05, 0.05), 4)
                    if rng.random() < spec.out_of_range_fraction:
                        scale = rng.uniform(0.6, 2.5) if rng.random() < spec.far_fraction \
                            else rng.uniform(0.01, 0.3)
                        offset = width * scale
                        value = ref_min - offset if rng.random() < 0.5 else ref_max + offset
                    else:
                        value = rng.uniform(ref_min, ref_max)
                results.append(LabResult(
                    patient_id=pid, day=day, test=test, value=value,
                    unit=units.get(test, ""), ref_min=ref_min, ref_max=ref_max,
                    institution="synthetic",
                ))

        patients[pid] = Patient(
            patient_id=pid, sex=sex, age=age,
            day_status=_status_walk(rng, sorted(patient_days)),
        )

    results.sort(key=lambda r: r.sort_key)
    dataset = Dataset(patients=patients, results=results, rules_version="synthetic")
    return dataset.with_cuts(compute_cuts(dataset))


def _status_walk(rng: random.Random, days: Iterable[date]) -> dict[date, DayStatus]:
    days = list(days)
    if not days:
        return {}
    statuses: dict[date, DayStatus] = {}
    state = rng.choices(_WALK_STATUSES[:3], weights=(5, 3, 2))[0]
    span = [days[0] + timedelta(days=i) for i in range((days[-1] - days[0]).days + 1)]
    for day in span:
        if rng.random() < 0.2:
            state = rng.choice(_WALK_STATUSES)
        statuses[day] = state
    if rng.random() < 0.03:
        statuses[span[-1]] = DayStatus.DIED
    return statuses
