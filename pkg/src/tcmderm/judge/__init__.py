"""Rubric judging: prompt assembly, verdict parsing, deterministic scoring."""

from .harness import (
    AggregateReport,
    JudgeRunRecord,
    ModelAggregate,
    aggregate,
    invoke_judge,
    reconcile_reason,
    trunc4,
)
from .prompts import NO_REFERENCE, JudgePromptError, build_reason_prompt, build_rep_prompt
from .scoring import (
    ContraindicationHit,
    HerbMatch,
    PairRule,
    canonical_names,
    check_contraindications,
    compatibility_point,
    herb_match,
    load_alias_table,
    load_pair_table,
    normalize_herb,
    score_completeness,
)
from .verdicts import (
    InvariantViolation,
    JsonNotFoundError,
    MissingKeyError,
    ReasonVerdict,
    RepVerdict,
    Verdict,
    VerdictError,
    extract_json,
    parse_verdict,
)

__all__ = [
    "AggregateReport",
    "ContraindicationHit",
    "HerbMatch",
    "InvariantViolation",
    "JsonNotFoundError",
    "JudgePromptError",
    "JudgeRunRecord",
    "MissingKeyError",
    "ModelAggregate",
    "NO_REFERENCE",
    "PairRule",
    "ReasonVerdict",
    "RepVerdict",
    "Verdict",
    "VerdictError",
    "aggregate",
    "build_reason_prompt",
    "build_rep_prompt",
    "canonical_names",
    "check_contraindications",
    "compatibility_point",
    "extract_json",
    "herb_match",
    "invoke_judge",
    "load_alias_table",
    "load_pair_table",
    "normalize_herb",
    "parse_verdict",
    "reconcile_reason",
    "score_completeness",
    "trunc4",
]
