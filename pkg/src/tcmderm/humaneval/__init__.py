"""Blinded multicenter human evaluation: studies, sheets, reports, HTTP API."""

from .study import (
    DIMENSIONS,
    MAX_DIMENSION_SCORE,
    MAX_TOTAL,
    OUTPUT_FIELDS,
    VARIANCE_CONVENTION,
    BlindMapping,
    ModelStats,
    ScoreSheet,
    SheetRejected,
    Study,
    StudyError,
    StudyReport,
    StudyStore,
    close_study,
    compute_report,
    create_study,
    draw_mapping,
    reveal,
    submit_sheet,
)

__all__ = [
    "DIMENSIONS",
    "MAX_DIMENSION_SCORE",
    "MAX_TOTAL",
    "OUTPUT_FIELDS",
    "VARIANCE_CONVENTION",
    "BlindMapping",
    "ModelStats",
    "ScoreSheet",
    "SheetRejected",
    "Study",
    "StudyError",
    "StudyReport",
    "StudyStore",
    "close_study",
    "compute_report",
    "create_study",
    "draw_mapping",
    "reveal",
    "submit_sheet",
]
