"""Persistence round-trip, graph export laws, generator determinism."""

from __future__ import annotations

import io
import json

import pytest

from labtimeline.errors import FormatError, VersionError
from labtimeline.ingest import clean_dataset
from labtimeline.model import ResultCategory
from labtimeline.store import (
    Dataset,
    SyntheticSpec,
    export_graph,
    generate_synthetic,
    load,
    save,
)
from labtimeline.categorize import categorize_result, compute_cuts

from conftest import d, hb, mcv


class TestPersistence:
    def test_round_trip(self, small_dataset, tmp_path):
        target = tmp_path / "ds.jsonl"
        save(small_dataset, target)
        assert load(target) == small_dataset

    def test_empty_dataset_round_trips(self, tmp_path):
        empty = Dataset(patients={}, results=[], cuts={}, rules_version="1")
        target = tmp_path / "empty.jsonl"
        save(empty, target)
        assert load(target) == empty

    def test_bumped_major_version_rejected(self, small_dataset, tmp_path):
        target = tmp_path / "ds.jsonl"
        save(small_dataset, target)
        lines = target.read_text().splitlines()
        header = json.loads(lines[0])
        header["schema"] = "2.0"
        target.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
        with pytest.raises(VersionError):
            load(target)

    def test_minor_version_accepted(self, small_dataset, tmp_path):
        target = tmp_path / "ds.jsonl"
        save(small_dataset, target)
        lines = target.read_text().splitlines()
        header = json.loads(lines[0])
        header["schema"] = "1.7"
        target.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
        assert load(target) == small_dataset

    def test_corrupt_line_reports_line_number(self, small_dataset, tmp_path):
        target = tmp_path / "ds.jsonl"
        save(small_dataset, target)
        lines = target.read_text().splitlines()
        lines[2] = '{"kind": "patient", "truncated": tru'
        target.write_text("\n".join(lines) + "\n")
        with pytest.raises(FormatError) as err:
            load(target)
        assert err.value.line == 3

    def test_missing_header(self, tmp_path):
        target = tmp_path / "ds.jsonl"
        target.write_text('{"kind":"cuts","test":"X","low_cut":null,"high_cut":null}\n')
        with pytest.raises(FormatError):
            load(target)

    def test_save_is_byte_stable(self, small_dataset):
        one, two = io.StringIO(), io.StringIO()
        save(small_dataset, one)
        save(small_dataset, two)
        assert one.getvalue() == two.getvalue()


class TestDatasetValidate:
    def test_clean_dataset_is_valid(self, small_dataset):
        assert small_dataset.validate() == []

    def test_detects_orphan_result(self, small_dataset):
        broken = Dataset(
            patients={k: v for k, v in small_dataset.patients.items() if k != "PB2"},
            results=small_dataset.results,
            cuts=small_dataset.cuts,
        )
        assert any("PB2" in p for p in broken.validate())

    def test_detects_unsorted_results(self, small_dataset):
        broken = Dataset(
            patients=small_dataset.patients,
            results=list(reversed(small_dataset.results)),
            cuts=small_dataset.cuts,
        )
        assert any("sorted" in p for p in broken.validate())


class TestGraphExport:
    def test_counting_laws(self, tmp_path):
        dataset, _ = clean_dataset([
            hb("P1", d(1), 13.0),
            hb("P1", d(2), 13.5),
            mcv("P1", d(1), 90.0),
        ])
        graph = export_graph(dataset, tmp_path / "g.json")
        assert len(graph["nodes"]) == 1 + 2  # 1 patient + 2 distinct tests
        assert len(graph["edges"]) == 3

    def test_empty_dataset(self, tmp_path):
        empty = Dataset(patients={}, results=[], cuts={})
        graph = export_graph(empty, tmp_path / "g.json")
        assert graph == {"nodes": [], "edges": []}

    def test_reimport_reproduces_per_patient_counts(self, small_dataset, tmp_path):
        target = tmp_path / "g.json"
        export_graph(small_dataset, target)
        graph = json.loads(target.read_text())
        counts: dict[str, int] = {}
        for edge in graph["edges"]:
            pid = edge["source"].removeprefix("patient:")
            counts[pid] = counts.get(pid, 0) + 1
        expected = {
            pid: len(small_dataset.results_for(pid))
            for pid in small_dataset.patients
            if small_dataset.results_for(pid)
        }
        assert counts == expected

    def test_edge_categories_match_engine(self, small_dataset, tmp_path):
        graph = export_graph(small_dataset, tmp_path / "g.json")
        by_key = {
            (e["source"], e["target"], e["day"]): e["category"] for e in graph["edges"]
        }
        for r in small_dataset.results:
            key = (f"patient:{r.patient_id}", f"test:{r.test}", r.day.isoformat())
            assert by_key[key] == categorize_result(r, small_dataset.cuts).code


class TestGenerator:
    def test_same_seed_same_dataset(self):
        spec = SyntheticSpec(n_patients=4, tests=6, day_span=15, seed=42)
        assert generate_synthetic(spec) == generate_synthetic(spec)

    def test_different_seed_differs(self):
        a = generate_synthetic(SyntheticSpec(n_patients=4, tests=6, day_span=15, seed=1))
        b = generate_synthetic(SyntheticSpec(n_patients=4, tests=6, day_span=15, seed=2))
        assert a != b

    def test_zero_out_of_range_all_normal(self):
        dataset = generate_synthetic(SyntheticSpec(
            n_patients=3, tests=8, day_span=10, seed=5, out_of_range_fraction=0.0,
        ))
        for r in dataset.results:
            assert categorize_result(r, dataset.cuts) is ResultCategory.NORMAL
        assert all(c.low_cut is None and c.high_cut is None for c in dataset.cuts.values())

    def test_dense_patient_scale_case(self):
        dataset = generate_synthetic(SyntheticSpec(n_patients=1, tests=46, day_span=448, seed=9))
        results = dataset.results_for("P00001")
        assert 9_000 <= len(results) <= 11_000
        assert len({r.test for r in results}) == 46
        assert len({r.day for r in results}) <= 448

    def test_generated_dataset_is_valid(self):
        dataset = generate_synthetic(SyntheticSpec(n_patients=5, tests=10, day_span=20, seed=3))
        assert dataset.validate() == []
        assert dataset.cuts == compute_cuts(dataset)

    def test_varying_reference_ranges(self):
        dataset = generate_synthetic(SyntheticSpec(n_patients=2, tests=4, day_span=20, seed=3))
        hb_refs = {(r.ref_min, r.ref_max) for r in dataset.results if r.test == "Hb"}
        assert len(hb_refs) > 1

    @pytest.mark.parametrize("bad", [
        dict(n_patients=0),
        dict(n_patients=1, day_span=0),
        dict(n_patients=1, fill_rate=0.0),
        dict(n_patients=1, out_of_range_fraction=1.5),
        dict(n_patients=1, tests=9999),
        dict(n_patients=1, tests=[]),
    ])
    def test_invalid_spec_rejected(self, bad):
        with pytest.raises(ValueError):
            generate_synthetic(SyntheticSpec(**bad))
