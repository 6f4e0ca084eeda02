"""Lab-test timeline engine.

Ingests heterogeneous raw lab exports, normalizes them to canonical tests
and units, categorizes every result into five abnormality bands, flags
relevant changes over time, and assembles per-patient clinical-path
timelines served over HTTP or rendered as static reports.
"""

from .analytics import (
    ActivityPoint,
    DaySummary,
    SeriesPoint,
    TestSeries,
    activity_series,
    day_summaries,
    flag_relevant_changes,
    rate_of_change,
    test_series,
)
from .categorize import ReferenceCuts, categorize, compute_cuts
from .errors import EngineError, FormatError, NotFoundError, VersionError
from .ingest import (
    NormalizationRules,
    RawRecord,
    RejectReason,
    Rejection,
    clean_dataset,
    ingest_files,
    load_rules,
    normalize_record,
    parse_raw_file,
)
from .model import (
    ChangeObservation,
    DayStatus,
    LabResult,
    Patient,
    ResultCategory,
    Sex,
    TestGroup,
    category_of_order,
    default_group_table,
    load_group_table,
    lookup_test,
)
from .store import Dataset, SyntheticSpec, export_graph, generate_synthetic, load, save
from .timeline import (
    ClinicalPath,
    DayOrder,
    PathOptions,
    build_clinical_path,
    export_path_delimited,
    toggle_day_order,
)

__version__ = "0.1.0"

__all__ = [
    "ActivityPoint", "ChangeObservation", "ClinicalPath", "Dataset", "DayOrder",
    "DaySummary", "DayStatus", "EngineError", "FormatError", "LabResult",
    "NormalizationRules", "NotFoundError", "PathOptions", "Patient", "RawRecord",
    "RejectReason", "Rejection", "ReferenceCuts", "ResultCategory", "SeriesPoint",
    "Sex", "SyntheticSpec", "TestGroup", "TestSeries", "VersionError",
    "activity_series", "build_clinical_path", "categorize", "category_of_order",
    "clean_dataset", "compute_cuts", "day_summaries", "default_group_table",
    "export_graph", "export_path_delimited", "flag_relevant_changes",
    "generate_synthetic", "ingest_files", "load", "load_group_table",
    "load_rules", "lookup_test", "normalize_record", "parse_raw_file",
    "rate_of_change", "save", "test_series", "toggle_day_order",
]
