"""Build the three staged training datasets and export them as conversations.

Each export line is one JSON record: `{"kind", "case_id", "visit_index",
"inputs", "messages"}` where `messages` is a list of `{role, text,
image_refs[]}`.  The two-stage kinds serialize their factorization as turn
boundaries: the second user turn embeds the first assistant turn's target
verbatim, so stage 2 is conditioned on stage 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .cases import ClinicalCase
from .templates import load_stage_template


@dataclass(frozen=True)
class RecSample:
    case_id: str
    visit_index: int
    image_id: str
    image_path: str
    target: str

    def __post_init__(self) -> None:
        if not self.target:
            raise ValueError("RecSample target must be non-empty")


@dataclass(frozen=True)
class RepSample:
    case_id: str
    visit_index: int
    image_paths: tuple[str, ...]
    target_description: str
    target_pathogenesis: str

    def __post_init__(self) -> None:
        if not self.image_paths:
            raise ValueError("RepSample needs at least one image")
        if not self.target_description or not self.target_pathogenesis:
            raise ValueError("RepSample needs both targets")


@dataclass(frozen=True)
class ReasonSample:
    case_id: str
    visit_index: int
    image_paths: tuple[str, ...]
    history: str
    signs: str
    symptoms: str
    rep_description: str
    rep_pathogenesis: str
    target_overall_pathogenesis: str
    target_syndrome: str
    target_treatment: str
    target_prescription: str

    def __post_init__(self) -> None:
        for name in ("target_overall_pathogenesis", "target_syndrome",
                     "target_treatment", "target_prescription"):
            if not getattr(self, name):
                raise ValueError(f"ReasonSample field {name} must be non-empty")
        for name in ("history", "signs", "symptoms", "rep_description", "rep_pathogenesis"):
            if getattr(self, name) is None:
                raise ValueError(f"ReasonSample field {name} must be present")


@dataclass
class DatasetStats:
    kind: str
    candidates: int = 0
    included: int = 0
    exclusions: dict[str, int] = field(default_factory=dict)

    def exclude(self, reason: str) -> None:
        self.exclusions[reason] = self.exclusions.get(reason, 0) + 1

    @property
    def excluded(self) -> int:
        return sum(self.exclusions.values())

    def check(self) -> None:
        if self.included + self.excluded != self.candidates:
            raise AssertionError("dataset stats do not add up")


def _sorted_cases(cases: list[ClinicalCase]) -> list[ClinicalCase]:
    return sorted(cases, key=lambda c: c.key)


def _sorted_images(case: ClinicalCase):
    return sorted(case.images, key=lambda img: img.id)


def build_rec(cases: list[ClinicalCase]) -> tuple[list[RecSample], DatasetStats]:
    """One sample per image carrying a per-image description."""
    stats = DatasetStats(kind="rec")
    samples: list[RecSample] = []
    for case in _sorted_cases(cases):
        for img in _sorted_images(case):
            stats.candidates += 1
            target = case.gold.per_image_descriptions.get(img.id) or img.annotation
            if not target:
                stats.exclude("no annotation")
                continue
            samples.append(
                RecSample(
                    case_id=case.case_id,
                    visit_index=case.visit_index,
                    image_id=img.id,
                    image_path=str(img.path),
                    target=target,
                )
            )
            stats.included += 1
    stats.check()
    return samples, stats


def build_rep(cases: list[ClinicalCase]) -> tuple[list[RepSample], DatasetStats]:
    """One sample per case whose gold has both the patient description and pathogenesis."""
    stats = DatasetStats(kind="rep")
    samples: list[RepSample] = []
    for case in _sorted_cases(cases):
        stats.candidates += 1
        d_hat = case.gold.patient_description
        m = case.gold.pathogenesis
        if not d_hat and not m:
            stats.exclude("no targets")
            continue
        if not d_hat or not m:
            stats.exclude("incomplete dual target")
            continue
        samples.append(
            RepSample(
                case_id=case.case_id,
                visit_index=case.visit_index,
                image_paths=tuple(str(i.path) for i in _sorted_images(case)),
                target_description=d_hat,
                target_pathogenesis=m,
            )
        )
        stats.included += 1
    stats.check()
    return samples, stats


_REASON_REQUIRED = (
    ("patient_description", "missing patient description"),
    ("pathogenesis", "missing pathogenesis"),
    ("overall_pathogenesis", "missing overall pathogenesis"),
    ("syndrome", "missing syndrome"),
    ("treatment_principle", "missing treatment principle"),
    ("prescription", "missing prescription"),
)


def build_reason(cases: list[ClinicalCase]) -> tuple[list[ReasonSample], DatasetStats]:
    """One sample per fully annotated case; d-hat and m come from gold (teacher forcing)."""
    stats = DatasetStats(kind="reason")
    samples: list[ReasonSample] = []
    for case in _sorted_cases(cases):
        stats.candidates += 1
        reason = next(
            (msg for attr, msg in _REASON_REQUIRED if not getattr(case.gold, attr)), None
        )
        if reason:
            stats.exclude(reason)
            continue
        samples.append(
            ReasonSample(
                case_id=case.case_id,
                visit_index=case.visit_index,
                image_paths=tuple(str(i.path) for i in _sorted_images(case)),
                history=case.history,
                signs=case.physical_signs,
                symptoms=case.symptoms,
                rep_description=case.gold.patient_description,
                rep_pathogenesis=case.gold.pathogenesis,
                target_overall_pathogenesis=case.gold.overall_pathogenesis,
                target_syndrome=case.gold.syndrome,
                target_treatment=case.gold.treatment_principle,
                target_prescription=case.gold.prescription_text,
            )
        )
        stats.included += 1
    stats.check()
    return samples, stats


def _msg(role: str, text: str, image_refs: list[str] | None = None) -> dict:
    return {"role": role, "text": text, "image_refs": image_refs or []}


def _rec_record(s: RecSample, language: str) -> dict:
    instruction = load_stage_template("rec_instruction", language)
    return {
        "kind": "rec",
        "case_id": s.case_id,
        "visit_index": s.visit_index,
        "inputs": {"image_id": s.image_id},
        "messages": [
            _msg("user", instruction, [s.image_path]),
            _msg("assistant", s.target),
        ],
    }


def _rep_record(s: RepSample, language: str) -> dict:
    stage1 = load_stage_template("rep_stage1", language)
    stage2 = load_stage_template("rep_stage2", language).format(
        description=s.target_description
    )
    return {
        "kind": "rep",
        "case_id": s.case_id,
        "visit_index": s.visit_index,
        "inputs": {},
        "messages": [
            _msg("user", stage1, list(s.image_paths)),
            _msg("assistant", s.target_description),
            _msg("user", stage2),
            _msg("assistant", s.target_pathogenesis),
        ],
    }


def format_reason_block(syndrome: str, treatment: str, prescription: str) -> str:
    return f"syndrome: {syndrome}\ntreatment: {treatment}\nprescription: {prescription}"


def _reason_record(s: ReasonSample, language: str) -> dict:
    stage1 = load_stage_template("reason_stage1", language).format(
        history=s.history,
        signs=s.signs,
        symptoms=s.symptoms,
        description=s.rep_description,
        pathogenesis=s.rep_pathogenesis,
    )
    stage2 = load_stage_template("reason_stage2", language).format(
        overall_pathogenesis=s.target_overall_pathogenesis
    )
    return {
        "kind": "reason",
        "case_id": s.case_id,
        "visit_index": s.visit_index,
        "inputs": {
            "history": s.history,
            "signs": s.signs,
            "symptoms": s.symptoms,
            "rep_description": s.rep_description,
            "rep_pathogenesis": s.rep_pathogenesis,
        },
        "messages": [
            _msg("user", stage1, list(s.image_paths)),
            _msg("assistant", s.target_overall_pathogenesis),
            _msg("user", stage2),
            _msg("assistant", format_reason_block(
                s.target_syndrome, s.target_treatment, s.target_prescription)),
        ],
    }


_RECORD_BUILDERS = {"rec": _rec_record, "rep": _rep_record, "reason": _reason_record}
_SAMPLE_TYPES = {"rec": RecSample, "rep": RepSample, "reason": ReasonSample}


def export_conversations(
    samples: list, kind: str, out_dir: str | Path, language: str = "en"
) -> Path:
    """Write `{kind}.jsonl` under out_dir; deterministic given the same samples."""
    if kind not in _RECORD_BUILDERS:
        raise ValueError(f"unknown dataset kind {kind!r}")
    expected = _SAMPLE_TYPES[kind]
    for s in samples:
        if not isinstance(s, expected):
            raise ValueError(f"export of kind {kind!r} got a {type(s).__name__}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{kind}.jsonl"
    builder = _RECORD_BUILDERS[kind]
    with path.open("w", encoding="utf-8") as fh:
        for s in samples:
            record = builder(s, language)
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            fh.write("\n")
    return path
