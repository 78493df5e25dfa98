"""Rubric verdict schemas: parsing, validation, and invariant checks.

Two verdict kinds: "rep" (25-point rubric over completeness, lesion
description, pathomechanism) and "reason" (45-point rubric adding syndrome,
treatment, and formula/prescription).  Parsing extracts the first JSON
object from the judge's reply (tolerating code fences), validates every
required key, and enforces the arithmetic invariants.  Violations are
errors; nothing is clamped or silently fixed.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass


class VerdictError(Exception):
    """Base for verdict parse/validation failures."""


class JsonNotFoundError(VerdictError):
    def __init__(self, raw_text: str):
        super().__init__("no JSON object found in judge output")
        self.raw_text = raw_text


class MissingKeyError(VerdictError):
    def __init__(self, key: str):
        super().__init__(f"missing key: {key}")
        self.key = key


class InvariantViolation(VerdictError):
    def __init__(self, name: str, detail: str):
        super().__init__(f"invariant violation on {name}: {detail}")
        self.name = name


_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL | re.IGNORECASE)


def extract_json(raw_text: str) -> tuple[dict, bool]:
    """First JSON object in the text; second value is the repaired flag."""
    try:
        doc = json.loads(raw_text)
        if isinstance(doc, dict):
            return doc, False
    except json.JSONDecodeError:
        pass

    candidates = [m.group(1) for m in _FENCE_RE.finditer(raw_text)]
    candidates.append(raw_text)
    for candidate in candidates:
        start = candidate.find("{")
        while start != -1:
            depth = 0
            in_string = False
            escape = False
            for i in range(start, len(candidate)):
                ch = candidate[i]
                if in_string:
                    if escape:
                        escape = False
                    elif ch == "\\":
                        escape = True
                    elif ch == '"':
                        in_string = False
                    continue
                if ch == '"':
                    in_string = True
                elif ch == "{":
                    depth += 1
                elif ch == "}":
                    depth -= 1
                    if depth == 0:
                        try:
                            doc = json.loads(candidate[start : i + 1])
                        except json.JSONDecodeError:
                            break
                        if isinstance(doc, dict):
                            return doc, True
                        break
            start = candidate.find("{", start + 1)
    raise JsonNotFoundError(raw_text)


def _get(doc: dict, path: tuple[str, ...]):
    node = doc
    for key in path:
        if not isinstance(node, dict) or key not in node:
            raise MissingKeyError(".".join(path))
        node = node[key]
    return node


def _number(doc: dict, *path: str) -> float:
    value = _get(doc, path)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvariantViolation(".".join(path), f"expected a number, got {value!r}")
    return float(value)


def _integer(doc: dict, *path: str) -> int:
    value = _get(doc, path)
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvariantViolation(".".join(path), f"expected an integer, got {value!r}")
    return value


def _text(doc: dict, *path: str) -> str:
    value = _get(doc, path)
    if not isinstance(value, str):
        raise InvariantViolation(".".join(path), f"expected a string, got {value!r}")
    return value


def _text_list(doc: dict, *path: str) -> tuple[str, ...]:
    value = _get(doc, path)
    if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
        raise InvariantViolation(".".join(path), f"expected a list of strings, got {value!r}")
    return tuple(value)


def _bounded(name: str, value: float, maximum: float) -> float:
    if value < 0:
        raise InvariantViolation(name, f"{value} is negative")
    if value > maximum:
        raise InvariantViolation(name, f"{value} exceeds maximum {maximum}")
    return value


_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class RepVerdict:
    completeness_score: float
    missing_items: tuple[str, ...]
    completeness_comments: str
    lesion_score: float
    feature_accuracy: str
    terminology: float
    lesion_comments: str
    pathomechanism_score: float
    pathomechanism_accuracy: float
    reasoning_consistency: float
    pathomechanism_comments: str
    stage2_total: float
    max_score: float

    MAX = 25.0
    kind = "rep"

    @property
    def total(self) -> float:
        return self.stage2_total

    def section_scores(self) -> dict[str, float]:
        return {
            "completeness": self.completeness_score,
            "lesion_description": self.lesion_score,
            "pathomechanism": self.pathomechanism_score,
        }

    def to_dict(self) -> dict:
        return {
            "Response Completeness": {
                "score": self.completeness_score,
                "Missing Items": list(self.missing_items),
                "comments": self.completeness_comments,
            },
            "Lesion Condition Description": {
                "score": self.lesion_score,
                "Feature Extraction Accuracy Rate": self.feature_accuracy,
                "Terminology Standardization": self.terminology,
                "comments": self.lesion_comments,
            },
            "Lesion-Indicated Pathomechanism": {
                "score": self.pathomechanism_score,
                "Pathomechanism Accuracy": self.pathomechanism_accuracy,
                "Reasoning Consistency": self.reasoning_consistency,
                "comments": self.pathomechanism_comments,
            },
            "Stage2 Total Score": self.stage2_total,
            "Maximum Score": self.max_score,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RepVerdict":
        v = cls(
            completeness_score=_number(doc, "Response Completeness", "score"),
            missing_items=_text_list(doc, "Response Completeness", "Missing Items"),
            completeness_comments=_text(doc, "Response Completeness", "comments"),
            lesion_score=_number(doc, "Lesion Condition Description", "score"),
            feature_accuracy=_text(
                doc, "Lesion Condition Description", "Feature Extraction Accuracy Rate"
            ),
            terminology=_number(
                doc, "Lesion Condition Description", "Terminology Standardization"
            ),
            lesion_comments=_text(doc, "Lesion Condition Description", "comments"),
            pathomechanism_score=_number(doc, "Lesion-Indicated Pathomechanism", "score"),
            pathomechanism_accuracy=_number(
                doc, "Lesion-Indicated Pathomechanism", "Pathomechanism Accuracy"
            ),
            reasoning_consistency=_number(
                doc, "Lesion-Indicated Pathomechanism", "Reasoning Consistency"
            ),
            pathomechanism_comments=_text(doc, "Lesion-Indicated Pathomechanism", "comments"),
            stage2_total=_number(doc, "Stage2 Total Score"),
            max_score=_number(doc, "Maximum Score"),
        )
        v.validate()
        return v

    def validate(self) -> None:
        if self.completeness_score not in (0.0, 2.5, 5.0):
            raise InvariantViolation(
                "Response Completeness.score",
                f"{self.completeness_score} not in {{0, 2.5, 5}}",
            )
        _bounded("Lesion Condition Description.score", self.lesion_score, 10)
        _bounded(
            "Lesion Condition Description.Terminology Standardization", self.terminology, 4
        )
        _bounded("Lesion-Indicated Pathomechanism.score", self.pathomechanism_score, 10)
        _bounded(
            "Lesion-Indicated Pathomechanism.Pathomechanism Accuracy",
            self.pathomechanism_accuracy, 6,
        )
        _bounded(
            "Lesion-Indicated Pathomechanism.Reasoning Consistency",
            self.reasoning_consistency, 4,
        )
        expected = self.completeness_score + self.lesion_score + self.pathomechanism_score
        if abs(self.stage2_total - expected) > _SUM_TOLERANCE:
            raise InvariantViolation(
                "Stage2 Total Score",
                f"{self.stage2_total} != sum of section scores {expected}",
            )
        if self.max_score != self.MAX:
            raise InvariantViolation("Maximum Score", f"{self.max_score} != {self.MAX}")


@dataclass(frozen=True)
class ReasonVerdict:
    completeness_score: float
    items_answered: int
    missing_items: tuple[str, ...]
    pathomechanism_score: float
    evidence_extraction: float
    rag_alignment: float
    logical_coherence: float
    syndrome_score: float
    syndrome_accuracy: float
    diagnostic_specificity: float
    treatment_score: float
    principle_targeting: float
    terminology_professionalism: float
    formula_score: float
    formula_name_match: float
    herb_matching_score: float
    identical_count: int
    label_total: int
    identical_list: tuple[str, ...]
    matching_rate: str
    compatibility: float
    total: float
    max_score: float
    overall_comments: str

    MAX = 45.0
    kind = "reason"

    def section_scores(self) -> dict[str, float]:
        return {
            "completeness": self.completeness_score,
            "pathomechanism": self.pathomechanism_score,
            "syndrome": self.syndrome_score,
            "treatment": self.treatment_score,
            "formula": self.formula_score,
        }

    def to_dict(self) -> dict:
        return {
            "Response Completeness": {
                "score": self.completeness_score,
                "Number of Items Actually Answered": self.items_answered,
                "Missing Items": list(self.missing_items),
            },
            "Etiology and Pathomechanism Analysis": {
                "score": self.pathomechanism_score,
                "Evidence Extraction": self.evidence_extraction,
                "RAG Alignment": self.rag_alignment,
                "Logical Coherence": self.logical_coherence,
            },
            "Syndrome Differentiation": {
                "score": self.syndrome_score,
                "Syndrome Accuracy": self.syndrome_accuracy,
                "Diagnostic Specificity": self.diagnostic_specificity,
            },
            "Treatment Method": {
                "score": self.treatment_score,
                "Therapeutic Principle Targeting": self.principle_targeting,
                "Terminology Professionalism": self.terminology_professionalism,
            },
            "Formula and Prescription": {
                "score": self.formula_score,
                "Formula Name Match": self.formula_name_match,
                "Herb Matching Score": self.herb_matching_score,
                "Number of Identical Herbs": self.identical_count,
                "Total Herbs in Label Prescription": self.label_total,
                "Identical Herb List": list(self.identical_list),
                "Matching Rate": self.matching_rate,
                "Compatibility Logic": self.compatibility,
            },
            "Total Score": self.total,
            "Maximum Score": self.max_score,
            "Overall Comments": self.overall_comments,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ReasonVerdict":
        v = cls(
            completeness_score=_number(doc, "Response Completeness", "score"),
            items_answered=_integer(
                doc, "Response Completeness", "Number of Items Actually Answered"
            ),
            missing_items=_text_list(doc, "Response Completeness", "Missing Items"),
            pathomechanism_score=_number(doc, "Etiology and Pathomechanism Analysis", "score"),
            evidence_extraction=_number(
                doc, "Etiology and Pathomechanism Analysis", "Evidence Extraction"
            ),
            rag_alignment=_number(doc, "Etiology and Pathomechanism Analysis", "RAG Alignment"),
            logical_coherence=_number(
                doc, "Etiology and Pathomechanism Analysis", "Logical Coherence"
            ),
            syndrome_score=_number(doc, "Syndrome Differentiation", "score"),
            syndrome_accuracy=_number(doc, "Syndrome Differentiation", "Syndrome Accuracy"),
            diagnostic_specificity=_number(
                doc, "Syndrome Differentiation", "Diagnostic Specificity"
            ),
            treatment_score=_number(doc, "Treatment Method", "score"),
            principle_targeting=_number(
                doc, "Treatment Method", "Therapeutic Principle Targeting"
            ),
            terminology_professionalism=_number(
                doc, "Treatment Method", "Terminology Professionalism"
            ),
            formula_score=_number(doc, "Formula and Prescription", "score"),
            formula_name_match=_number(doc, "Formula and Prescription", "Formula Name Match"),
            herb_matching_score=_number(
                doc, "Formula and Prescription", "Herb Matching Score"
            ),
            identical_count=_integer(
                doc, "Formula and Prescription", "Number of Identical Herbs"
            ),
            label_total=_integer(
                doc, "Formula and Prescription", "Total Herbs in Label Prescription"
            ),
            identical_list=_text_list(doc, "Formula and Prescription", "Identical Herb List"),
            matching_rate=_text(doc, "Formula and Prescription", "Matching Rate"),
            compatibility=_number(doc, "Formula and Prescription", "Compatibility Logic"),
            total=_number(doc, "Total Score"),
            max_score=_number(doc, "Maximum Score"),
            overall_comments=_text(doc, "Overall Comments"),
        )
        v.validate()
        return v

    def validate(self) -> None:
        if not 0 <= self.items_answered <= 5:
            raise InvariantViolation(
                "Response Completeness.Number of Items Actually Answered",
                f"{self.items_answered} not in 0..5",
            )
        expected_completeness = self.items_answered / 5 * 5
        if abs(self.completeness_score - expected_completeness) > _SUM_TOLERANCE:
            raise InvariantViolation(
                "Response Completeness.score",
                f"{self.completeness_score} != items/5 x 5 = {expected_completeness}",
            )
        _bounded("Etiology and Pathomechanism Analysis.score", self.pathomechanism_score, 10)
        _bounded(
            "Etiology and Pathomechanism Analysis.Evidence Extraction",
            self.evidence_extraction, 4,
        )
        _bounded("Etiology and Pathomechanism Analysis.RAG Alignment", self.rag_alignment, 4)
        _bounded(
            "Etiology and Pathomechanism Analysis.Logical Coherence",
            self.logical_coherence, 2,
        )
        _bounded("Syndrome Differentiation.score", self.syndrome_score, 10)
        _bounded("Syndrome Differentiation.Syndrome Accuracy", self.syndrome_accuracy, 6)
        _bounded(
            "Syndrome Differentiation.Diagnostic Specificity", self.diagnostic_specificity, 4
        )
        _bounded("Treatment Method.score", self.treatment_score, 10)
        _bounded("Treatment Method.Therapeutic Principle Targeting", self.principle_targeting, 6)
        _bounded(
            "Treatment Method.Terminology Professionalism",
            self.terminology_professionalism, 4,
        )
        _bounded("Formula and Prescription.score", self.formula_score, 10)
        _bounded("Formula and Prescription.Formula Name Match", self.formula_name_match, 2)
        _bounded("Formula and Prescription.Herb Matching Score", self.herb_matching_score, 7)
        if self.identical_count < 0 or self.label_total < 0:
            raise InvariantViolation(
                "Formula and Prescription.Number of Identical Herbs",
                "herb counts must be non-negative",
            )
        if self.compatibility not in (0.0, 1.0):
            raise InvariantViolation(
                "Formula and Prescription.Compatibility Logic",
                f"{self.compatibility} not in {{0, 1}}",
            )
        expected_total = sum(self.section_scores().values())
        if abs(self.total - expected_total) > _SUM_TOLERANCE:
            raise InvariantViolation(
                "Total Score", f"{self.total} != sum of sections {expected_total}"
            )
        if self.max_score != self.MAX:
            raise InvariantViolation("Maximum Score", f"{self.max_score} != {self.MAX}")


Verdict = RepVerdict | ReasonVerdict
_KINDS = {"rep": RepVerdict, "reason": ReasonVerdict}


def parse_verdict(raw_text: str, kind: str) -> tuple[Verdict, bool]:
    """Parse a judge reply into a validated verdict; returns (verdict, repaired)."""
    if kind not in _KINDS:
        raise ValueError(f"unknown verdict kind {kind!r}")
    doc, repaired = extract_json(raw_text)
    return _KINDS[kind].from_dict(doc), repaired
