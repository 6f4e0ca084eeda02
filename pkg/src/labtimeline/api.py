"""Read-only HTTP JSON service for the timeline UI.

All endpoints live under /v1 and are deterministic functions of
(dataset, config, query). Clinical data is never mutated; the only PUT is
the presentation config, which is process-global, swapped atomically and
persisted to a sidecar file so restarts keep customizations.
"""

from __future__ import annotations

import json
import threading
from datetime import date
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse
from pydantic import BaseModel, field_validator

from . import analytics, timeline
from .errors import NotFoundError
from .model import (
    DEFAULT_CATEGORY_COLORS,
    DEFAULT_STATUS_COLORS,
    DayStatus,
    ResultCategory,
    TestGroup,
)
from .store import Dataset

_CATEGORY_KEYS = [c.code for c in ResultCategory]
_STATUS_KEYS = [s.value for s in DayStatus]


class PresentationConfig(BaseModel):
    """Colors, theme and the relevant-change threshold."""

    category_colors: dict[str, str] = {
        c.code: color for c, color in DEFAULT_CATEGORY_COLORS.items()
    }
    status_colors: dict[str, str] = {
        s.value: color for s, color in DEFAULT_STATUS_COLORS.items()
    }
    theme: str = "light"
    rc_threshold_percent: float = analytics.DEFAULT_THRESHOLD_PERCENT

    @field_validator("category_colors")
    @classmethod
    def _all_categories(cls, v: dict[str, str]) -> dict[str, str]:
        missing = [k for k in _CATEGORY_KEYS if k not in v]
        if missing:
            raise ValueError(f"missing category colors: {missing}")
        return v

    @field_validator("status_colors")
    @classmethod
    def _all_statuses(cls, v: dict[str, str]) -> dict[str, str]:
        missing = [k for k in _STATUS_KEYS if k not in v]
        if missing:
            raise ValueError(f"missing status colors: {missing}")
        return v

    @field_validator("theme")
    @classmethod
    def _theme(cls, v: str) -> str:
        if v not in ("light", "dark"):
            raise ValueError("theme must be 'light' or 'dark'")
        return v

    @field_validator("rc_threshold_percent")
    @classmethod
    def _threshold(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("rc_threshold_percent must be > 0")
        return v


def _parse_day(text: str | None, name: str) -> date | None:
    if text is None or text == "":
        return None
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise HTTPException(status_code=400, detail=f"malformed {name} date {text!r} (expect yyyy-MM-dd)")


def _parse_order(text: str | None) -> timeline.DayOrder:
    if text is None or text == "" or text == "asc":
        return timeline.DayOrder.ASCENDING
    if text == "desc":
        return timeline.DayOrder.DESCENDING
    raise HTTPException(status_code=400, detail=f"order must be 'asc' or 'desc', got {text!r}")


def _parse_bool(text: str | None, name: str) -> bool:
    if text is None or text == "" or text.lower() == "false":
        return False
    if text.lower() == "true":
        return True
    raise HTTPException(status_code=400, detail=f"{name} must be 'true' or 'false'")


def _csv_set(text: str | None) -> frozenset[str] | None:
    if text is None or text == "":
        return None
    return frozenset(part for part in text.split(",") if part)


def path_payload(path: timeline.ClinicalPath) -> dict:
    """ClinicalPath in its wire shape (plain JSON types only)."""
    return {
        "patient": {
            "patient_id": path.patient.patient_id,
            "sex": path.patient.sex.value,
            "age": path.patient.age,
        },
        "options": {
            "from": path.options.date_from.isoformat() if path.options.date_from else None,
            "to": path.options.date_to.isoformat() if path.options.date_to else None,
            "only_days_with_tests": path.options.only_days_with_tests,
            "order": path.options.day_order.value,
        },
        "columns": [
            {"day": c.day.isoformat(), "status": c.status.value, "gap_after": c.gap_after}
            for c in path.columns
        ],
        "rows": [{"group": r.group, "test": r.test} for r in path.rows],
        "cells": [
            {
                "test": test,
                "day": day.isoformat(),
                "value": cell.value,
                "category": cell.category.code,
                "relevant_change": cell.relevant_change,
            }
            for (test, day), cell in path.cells.items()
        ],
        "day_summaries": [
            {
                "day": s.day.isoformat(),
                "test_count": s.test_count,
                "normal_count": s.normal_count,
                "abnormal_count": s.abnormal_count,
                "relevant_change_count": s.relevant_change_count,
            }
            for s in path.day_summaries
        ],
        "activity": [
            {
                "day": a.day.isoformat(),
                "test_count": a.test_count,
                "relevant_change_count": a.relevant_change_count,
            }
            for a in path.activity
        ],
    }


def series_payload(series: analytics.TestSeries) -> dict:
    return {
        "test": series.test,
        "points": [
            {
                "day": p.day.isoformat(),
                "value": p.value,
                "category": p.category.code,
                "relevant_change": p.relevant_change,
            }
            for p in series.points
        ],
        "overlay": {
            "ref_min": series.overlay.ref_min,
            "ref_max": series.overlay.ref_max,
            "low_cut": series.overlay.low_cut,
            "high_cut": series.overlay.high_cut,
        },
        "relevant_change_days": [d.isoformat() for d in series.relevant_change_days],
    }


def create_app(
    dataset: Dataset,
    config_path: str | Path | None = None,
    ui_dir: str | Path | None = None,
    groups: list[TestGroup] | None = None,
) -> FastAPI:
    app = FastAPI(title="labtimeline", version="1.0")
    config = PresentationConfig()
    if config_path is not None and Path(config_path).exists():
        config = PresentationConfig(**json.loads(Path(config_path).read_text("utf-8")))
    app.state.dataset = dataset
    app.state.config = config
    app.state.config_lock = threading.Lock()
    app.state.groups = groups

    @app.get("/v1/patients")
    def list_patients() -> JSONResponse:
        out = []
        for pid in sorted(dataset.patients):
            p = dataset.patients[pid]
            results = dataset.results_for(pid)
            days = sorted({r.day for r in results})
            out.append({
                "patient_id": pid,
                "sex": p.sex.value,
                "age": p.age,
                "result_count": len(results),
                "first_day": days[0].isoformat() if days else None,
                "last_day": days[-1].isoformat() if days else None,
            })
        return JSONResponse(out)

    @app.get("/v1/patients/{patient_id}/path")
    def get_path(
        patient_id: str,
        date_from: str | None = Query(default=None, alias="from"),
        date_to: str | None = Query(default=None, alias="to"),
        only_days_with_tests: str | None = None,
        order: str | None = None,
        tests: str | None = None,
        groups_param: str | None = Query(default=None, alias="groups"),
    ) -> JSONResponse:
        try:
            options = timeline.PathOptions(
                date_from=_parse_day(date_from, "from"),
                date_to=_parse_day(date_to, "to"),
                only_days_with_tests=_parse_bool(only_days_with_tests, "only_days_with_tests"),
                day_order=_parse_order(order),
                selected_tests=_csv_set(tests),
                selected_groups=_csv_set(groups_param),
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        try:
            path = timeline.build_clinical_path(
                dataset, patient_id, options,
                threshold_percent=app.state.config.rc_threshold_percent,
                groups=app.state.groups,
            )
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return JSONResponse(path_payload(path))

    @app.get("/v1/patients/{patient_id}/tests/{acronyms}/series")
    def get_series(
        patient_id: str,
        acronyms: str,
        date_from: str | None = Query(default=None, alias="from"),
        date_to: str | None = Query(default=None, alias="to"),
    ) -> JSONResponse:
        lo = _parse_day(date_from, "from")
        hi = _parse_day(date_to, "to")
        if lo and hi and lo > hi:
            raise HTTPException(status_code=400, detail="from must not exceed to")
        names = [t for t in acronyms.split(",") if t]
        if not names:
            raise HTTPException(status_code=400, detail="no test acronyms given")
        payload = []
        for test in names:
            try:
                series = analytics.test_series(
                    dataset, patient_id, test, lo, hi,
                    threshold_percent=app.state.config.rc_threshold_percent,
                )
            except NotFoundError as exc:
                raise HTTPException(status_code=404, detail=str(exc))
            payload.append(series_payload(series))
        return JSONResponse({"patient_id": patient_id, "series": payload})

    @app.get("/v1/config")
    def get_config() -> JSONResponse:
        return JSONResponse(app.state.config.model_dump())

    @app.put("/v1/config")
    def put_config(new_config: PresentationConfig) -> JSONResponse:
        with app.state.config_lock:
            app.state.config = new_config
            if config_path is not None:
                Path(config_path).write_text(
                    json.dumps(new_config.model_dump(), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8",
                )
        return JSONResponse(new_config.model_dump())

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
