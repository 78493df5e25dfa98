"""Blinded multicenter evaluation studies: mapping, sheets, reports.

One global model-to-letter mapping per study, drawn from a seeded
permutation; letters stay hidden in every view until the study is closed
and revealed.  Six dimensions, integer scores 0..10 each, total 60.
Statistics are exact (fractions): means and population variances are
computed across sheets, and the total mean equals the sum of the dimension
means by construction.  Persistence is an append-only JSON-lines event log
per study.
"""

from __future__ import annotations

import json
import random
import string
import threading
import uuid
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

DIMENSIONS = (
    "lesion_description",
    "etiology_pathogenesis",
    "syndrome_differentiation",
    "treatment_principle",
    "prescriptions_medications",
    "readability",
)
MAX_DIMENSION_SCORE = 10
MAX_TOTAL = MAX_DIMENSION_SCORE * len(DIMENSIONS)
OUTPUT_FIELDS = ("description", "pathogenesis", "syndrome", "treatment", "prescription")
VARIANCE_CONVENTION = (
    "means and population variances are computed across sheets (evaluator x case)"
)


class StudyError(Exception):
    pass


class SheetRejected(StudyError):
    def __init__(self, code: str, message: str, field: str | None = None):
        super().__init__(message)
        self.code = code
        self.field = field


@dataclass(frozen=True)
class BlindMapping:
    study_id: str
    assignment: dict[str, str]  # model_id -> letter
    seed: int
    revealed: bool = False

    @property
    def letters(self) -> tuple[str, ...]:
        return tuple(sorted(self.assignment.values()))

    def model_for(self, letter: str) -> str:
        for model_id, assigned in self.assignment.items():
            if assigned == letter:
                return model_id
        raise KeyError(letter)


def draw_mapping(study_id: str, models: list[str], seed: int) -> BlindMapping:
    if not 1 <= len(models) <= 26:
        raise StudyError("a study supports between 1 and 26 models")
    if len(set(models)) != len(models):
        raise StudyError("duplicate model ids")
    letters = list(string.ascii_uppercase[: len(models)])
    random.Random(seed).shuffle(letters)
    return BlindMapping(
        study_id=study_id,
        assignment={model: letters[i] for i, model in enumerate(models)},
        seed=seed,
    )


@dataclass(frozen=True)
class ScoreSheet:
    evaluator_id: str
    case_id: str
    letter: str
    scores: dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.scores.values())

    def validate(self) -> None:
        for dim in DIMENSIONS:
            if dim not in self.scores:
                raise SheetRejected("missing_dimension", f"missing dimension {dim}", dim)
        for dim, value in self.scores.items():
            if dim not in DIMENSIONS:
                raise SheetRejected("unknown_dimension", f"unknown dimension {dim}", dim)
            if isinstance(value, bool) or not isinstance(value, int):
                raise SheetRejected("bad_type", f"{dim} score must be an integer", dim)
            if not 0 <= value <= MAX_DIMENSION_SCORE:
                raise SheetRejected(
                    "out_of_range",
                    f"{dim} score {value} outside 0..{MAX_DIMENSION_SCORE}",
                    dim,
                )


@dataclass
class Study:
    study_id: str
    mapping: BlindMapping
    cases: dict[str, dict]  # case_id -> summary (history, signs, symptoms, image_urls)
    evaluators: dict[str, str]  # evaluator_id -> token
    outputs: dict[str, dict[str, dict[str, str]]]  # model_id -> case_id -> fields
    sheets: list[ScoreSheet] = field(default_factory=list)
    closed: bool = False

    @property
    def letters(self) -> tuple[str, ...]:
        return self.mapping.letters

    def outputs_by_letter(self, case_id: str) -> dict[str, dict[str, str]]:
        result = {}
        for model_id, per_case in self.outputs.items():
            letter = self.mapping.assignment[model_id]
            result[letter] = per_case.get(case_id, {})
        return dict(sorted(result.items()))

    def sheet_key_exists(self, sheet: ScoreSheet) -> bool:
        return any(
            s.evaluator_id == sheet.evaluator_id
            and s.case_id == sheet.case_id
            and s.letter == sheet.letter
            for s in self.sheets
        )


def create_study(
    models: list[str],
    cases: dict[str, dict],
    evaluators: dict[str, str],
    seed: int,
    outputs: dict[str, dict[str, dict[str, str]]] | None = None,
    study_id: str | None = None,
) -> Study:
    if not cases:
        raise StudyError("a study needs at least one case")
    if not evaluators:
        raise StudyError("a study needs at least one evaluator")
    study_id = study_id or uuid.uuid4().hex[:12]
    mapping = draw_mapping(study_id, models, seed)
    return Study(
        study_id=study_id,
        mapping=mapping,
        cases=dict(cases),
        evaluators=dict(evaluators),
        outputs=outputs or {m: {} for m in models},
    )


def submit_sheet(study: Study, sheet: ScoreSheet) -> None:
    """Validate and append; raises SheetRejected with a code and field."""
    if study.closed:
        raise SheetRejected("study_closed", "study is closed to submissions")
    if sheet.evaluator_id not in study.evaluators:
        raise SheetRejected("unknown_evaluator", f"evaluator {sheet.evaluator_id} not enrolled")
    if sheet.case_id not in study.cases:
        raise SheetRejected("unknown_case", f"unknown case {sheet.case_id}")
    if sheet.letter not in study.letters:
        raise SheetRejected("unknown_letter", f"unknown letter {sheet.letter}", "letter")
    sheet.validate()
    if study.sheet_key_exists(sheet):
        raise SheetRejected(
            "duplicate",
            f"sheet for ({sheet.evaluator_id}, {sheet.case_id}, {sheet.letter}) already submitted",
        )
    study.sheets.append(sheet)


def close_study(study: Study) -> None:
    study.closed = True


def reveal(study: Study) -> BlindMapping:
    if not study.closed:
        raise StudyError("close before reveal")
    study.mapping = BlindMapping(
        study_id=study.mapping.study_id,
        assignment=study.mapping.assignment,
        seed=study.mapping.seed,
        revealed=True,
    )
    return study.mapping


@dataclass
class ModelStats:
    key: str  # letter pre-reveal, model name after
    sheet_count: int
    dimension_means: dict[str, Fraction]
    dimension_variances: dict[str, Fraction]
    total_mean: Fraction
    total_variance: Fraction

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "sheet_count": self.sheet_count,
            "dimension_means": {d: float(v) for d, v in self.dimension_means.items()},
            "dimension_variances": {d: float(v) for d, v in self.dimension_variances.items()},
            "total_mean": float(self.total_mean),
            "total_variance": float(self.total_variance),
        }


@dataclass
class StudyReport:
    study_id: str
    variance_convention: str
    evaluator_count: int
    sheet_count: int
    models: dict[str, ModelStats]
    absent: list[str]

    def to_dict(self) -> dict:
        return {
            "study_id": self.study_id,
            "variance_convention": self.variance_convention,
            "evaluator_count": self.evaluator_count,
            "sheet_count": self.sheet_count,
            "models": {k: m.to_dict() for k, m in self.models.items()},
            "absent": list(self.absent),
        }


def _exact_mean(values: list[int]) -> Fraction:
    return Fraction(sum(values), len(values))


def _exact_population_variance(values: list[int]) -> Fraction:
    mu = _exact_mean(values)
    return sum((Fraction(v) - mu) ** 2 for v in values) / len(values)


def compute_report(study: Study) -> StudyReport:
    """Per-model means/variances; letters unless the mapping is revealed."""
    models: dict[str, ModelStats] = {}
    absent: list[str] = []
    for letter in study.letters:
        sheets = [s for s in study.sheets if s.letter == letter]
        key = study.mapping.model_for(letter) if study.mapping.revealed else letter
        if not sheets:
            absent.append(key)
            continue
        dimension_means = {
            d: _exact_mean([s.scores[d] for s in sheets]) for d in DIMENSIONS
        }
        dimension_variances = {
            d: _exact_population_variance([s.scores[d] for s in sheets]) for d in DIMENSIONS
        }
        models[key] = ModelStats(
            key=key,
            sheet_count=len(sheets),
            dimension_means=dimension_means,
            dimension_variances=dimension_variances,
            # Totals are sums of dimensions, so the exact total mean is the
            # sum of the dimension means.
            total_mean=sum(dimension_means.values(), Fraction(0)),
            total_variance=_exact_population_variance([s.total for s in sheets]),
        )
    return StudyReport(
        study_id=study.study_id,
        variance_convention=VARIANCE_CONVENTION,
        evaluator_count=len(study.evaluators),
        sheet_count=len(study.sheets),
        models=models,
        absent=absent,
    )


class StudyStore:
    """Event-sourced study persistence: one events.jsonl per study."""

    def __init__(self, base_dir: str | Path):
        self.base_dir = Path(base_dir)
        self.base_dir.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._global_lock = threading.Lock()

    def _lock(self, study_id: str) -> threading.Lock:
        with self._global_lock:
            return self._locks.setdefault(study_id, threading.Lock())

    def _events_path(self, study_id: str) -> Path:
        return self.base_dir / study_id / "events.jsonl"

    def _append(self, study_id: str, event: dict) -> None:
        path = self._events_path(study_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False, sort_keys=True) + "\n")

    def create(
        self,
        models: list[str],
        cases: dict[str, dict],
        evaluators: dict[str, str],
        seed: int,
        outputs: dict[str, dict[str, dict[str, str]]] | None = None,
        study_id: str | None = None,
    ) -> Study:
        study = create_study(models, cases, evaluators, seed, outputs, study_id)
        if self._events_path(study.study_id).exists():
            raise StudyError(f"study {study.study_id} already exists")
        with self._lock(study.study_id):
            self._append(
                study.study_id,
                {
                    "type": "created",
                    "study_id": study.study_id,
                    "models": list(study.outputs.keys()),
                    "assignment": study.mapping.assignment,
                    "seed": seed,
                    "cases": study.cases,
                    "evaluators": study.evaluators,
                    "outputs": study.outputs,
                },
            )
        return study

    def load(self, study_id: str) -> Study:
        path = self._events_path(study_id)
        if not path.exists():
            raise StudyError(f"no such study: {study_id}")
        study: Study | None = None
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                event = json.loads(line)
                if event["type"] == "created":
                    mapping = BlindMapping(
                        study_id=event["study_id"],
                        assignment=dict(event["assignment"]),
                        seed=event["seed"],
                    )
                    study = Study(
                        study_id=event["study_id"],
                        mapping=mapping,
                        cases=event["cases"],
                        evaluators=event["evaluators"],
                        outputs=event["outputs"],
                    )
                elif study is None:
                    raise StudyError(f"corrupt event log for {study_id}")
                elif event["type"] == "sheet":
                    study.sheets.append(
                        ScoreSheet(
                            evaluator_id=event["evaluator_id"],
                            case_id=event["case_id"],
                            letter=event["letter"],
                            scores={d: int(v) for d, v in event["scores"].items()},
                        )
                    )
                elif event["type"] == "closed":
                    study.closed = True
                elif event["type"] == "revealed":
                    study.mapping = BlindMapping(
                        study_id=study.study_id,
                        assignment=study.mapping.assignment,
                        seed=study.mapping.seed,
                        revealed=True,
                    )
        if study is None:
            raise StudyError(f"corrupt event log for {study_id}")
        return study

    def submit(self, study_id: str, sheet: ScoreSheet) -> None:
        with self._lock(study_id):
            study = self.load(study_id)
            submit_sheet(study, sheet)
            self._append(
                study_id,
                {
                    "type": "sheet",
                    "evaluator_id": sheet.evaluator_id,
                    "case_id": sheet.case_id,
                    "letter": sheet.letter,
                    "scores": sheet.scores,
                },
            )

    def close(self, study_id: str) -> None:
        with self._lock(study_id):
            study = self.load(study_id)
            if not study.closed:
                self._append(study_id, {"type": "closed"})

    def reveal(self, study_id: str) -> BlindMapping:
        with self._lock(study_id):
            study = self.load(study_id)
            mapping = reveal(study)
            self._append(study_id, {"type": "revealed"})
            return mapping

    def report(self, study_id: str) -> StudyReport:
        return compute_report(self.load(study_id))
