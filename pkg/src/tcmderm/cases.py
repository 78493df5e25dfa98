"""Clinical case records, gold annotations, and the corpus loader.

Corpus layout: a directory with `manifest.json` listing per-visit case files.
Each case file is one JSON document (schema documented in the README).
Image paths are resolved relative to the corpus root and must point at
existing PNG/JPEG files.  Loaded objects are immutable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}

# Prescription entry grammar: "Name (processing..., dose unit)" where the
# parenthesized group and both of its parts are optional, e.g.
# "Radix Rehmanniae (raw, 20 g)" or "Poria (20 g)" or "Poria".
_DELIMITERS = {",", "，", "、", "\n"}  # comma, full-width comma, enumeration comma
_OPEN_PARENS = {"(": ")", "（": "）"}
_DOSE_RE = re.compile(r"^(\d+(?:\.\d+)?)\s*(g|mg|kg|克|毫克)$", re.IGNORECASE)


class CorpusError(Exception):
    """Fatal corpus problem (missing or unreadable manifest)."""


class PrescriptionError(ValueError):
    """Unparseable prescription text."""


@dataclass(frozen=True)
class Dosage:
    amount: float
    unit: str

    def __str__(self) -> str:
        amount = int(self.amount) if self.amount == int(self.amount) else self.amount
        return f"{amount} {self.unit}"


@dataclass(frozen=True)
class HerbEntry:
    raw_text: str
    name: str
    dosage: Dosage | None = None
    processing: str | None = None


@dataclass(frozen=True)
class Prescription:
    entries: tuple[HerbEntry, ...]
    source_text: str

    def __post_init__(self) -> None:
        if not self.entries:
            raise PrescriptionError("prescription has no entries")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)


def _split_segments(text: str) -> list[str]:
    """Split on the delimiter set, ignoring delimiters inside parentheses."""
    segments: list[str] = []
    buf: list[str] = []
    depth = 0
    for ch in text:
        if ch in _OPEN_PARENS:
            depth += 1
        elif ch in _OPEN_PARENS.values():
            depth = max(0, depth - 1)
        if ch in _DELIMITERS and depth == 0:
            segments.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    segments.append("".join(buf))
    return [s.strip() for s in segments if s.strip()]


def _parse_entry(segment: str) -> HerbEntry:
    name = segment
    dosage: Dosage | None = None
    processing: str | None = None

    m = re.search(r"[(（](.*)[)）]\s*$", segment, re.DOTALL)
    if m:
        name = segment[: m.start()].strip()
        inner = [p.strip() for p in re.split(r"[,，、]", m.group(1)) if p.strip()]
        processing_tokens: list[str] = []
        for part in inner:
            dose = _DOSE_RE.match(part)
            if dose and dosage is None:
                dosage = Dosage(float(dose.group(1)), dose.group(2))
            else:
                processing_tokens.append(part)
        if processing_tokens:
            processing = ", ".join(processing_tokens)

    if not name:
        raise PrescriptionError(f"entry has empty herb name: {segment!r}")
    return HerbEntry(raw_text=segment, name=name, dosage=dosage, processing=processing)


def parse_prescription(
    text: str, errors: list[str] | None = None
) -> Prescription:
    """Parse free prescription text into per-herb entries.

    Entry-level problems (empty name) are appended to `errors` when given and
    parsing continues; an input yielding no valid entries raises.
    """
    if not text or not text.strip():
        raise PrescriptionError("prescription text is empty")
    entries: list[HerbEntry] = []
    for segment in _split_segments(text):
        try:
            entries.append(_parse_entry(segment))
        except PrescriptionError as exc:
            if errors is not None:
                errors.append(str(exc))
    return Prescription(entries=tuple(entries), source_text=text)


@dataclass(frozen=True)
class LesionImage:
    id: str
    path: Path
    view_tag: str = ""
    annotation: str | None = None


@dataclass(frozen=True)
class GoldAnnotation:
    per_image_descriptions: dict[str, str] = field(default_factory=dict)
    patient_description: str | None = None
    pathogenesis: str | None = None
    overall_pathogenesis: str | None = None
    syndrome: str | None = None
    treatment_principle: str | None = None
    formula_name: str | None = None
    prescription: Prescription | None = None

    @property
    def prescription_text(self) -> str | None:
        return self.prescription.source_text if self.prescription else None


@dataclass(frozen=True)
class ClinicalCase:
    case_id: str
    visit_index: int
    images: tuple[LesionImage, ...]
    history: str
    physical_signs: str
    symptoms: str
    gold: GoldAnnotation

    def __post_init__(self) -> None:
        if self.visit_index < 1:
            raise ValueError("visit_index must be >= 1")
        if not self.images:
            raise ValueError("a case needs at least one image")
        ids = [img.id for img in self.images]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate image ids in case {self.case_id}")

    @property
    def key(self) -> tuple[str, int]:
        return (self.case_id, self.visit_index)


@dataclass(frozen=True)
class CaseRejection:
    path: Path
    reason: str


_REQUIRED_FIELDS = ("case_id", "visit_index", "images", "history", "physical_signs", "symptoms")


def _case_from_dict(doc: dict, *, root: Path, source: Path) -> ClinicalCase:
    for name in _REQUIRED_FIELDS:
        if name not in doc:
            raise ValueError(f"missing field `{name}` in {source}")
    if not isinstance(doc["images"], list) or not doc["images"]:
        raise ValueError(f"field `images` must be a non-empty list in {source}")

    images = []
    for entry in doc["images"]:
        for name in ("id", "path"):
            if name not in entry:
                raise ValueError(f"image missing field `{name}` in {source}")
        path = (root / entry["path"]).resolve()
        if path.suffix.lower() not in IMAGE_EXTENSIONS:
            raise ValueError(f"image `{entry['id']}` has unsupported format {path.suffix!r} in {source}")
        if not path.is_file():
            raise ValueError(f"image path does not exist: {entry['path']} in {source}")
        images.append(
            LesionImage(
                id=entry["id"],
                path=path,
                view_tag=entry.get("view_tag", ""),
                annotation=entry.get("annotation"),
            )
        )

    gold_doc = doc.get("gold", {}) or {}
    prescription = None
    if gold_doc.get("prescription"):
        prescription = parse_prescription(gold_doc["prescription"])
    gold = GoldAnnotation(
        per_image_descriptions=dict(gold_doc.get("per_image_descriptions", {})),
        patient_description=gold_doc.get("patient_description"),
        pathogenesis=gold_doc.get("pathogenesis"),
        overall_pathogenesis=gold_doc.get("overall_pathogenesis"),
        syndrome=gold_doc.get("syndrome"),
        treatment_principle=gold_doc.get("treatment_principle"),
        formula_name=gold_doc.get("formula_name"),
        prescription=prescription,
    )
    return ClinicalCase(
        case_id=doc["case_id"],
        visit_index=int(doc["visit_index"]),
        images=tuple(images),
        history=doc["history"],
        physical_signs=doc["physical_signs"],
        symptoms=doc["symptoms"],
        gold=gold,
    )


def case_to_dict(case: ClinicalCase, *, root: Path | None = None) -> dict:
    """Serialize a case back to the on-disk schema (paths relative to root)."""

    def rel(p: Path) -> str:
        return str(p.relative_to(root.resolve())) if root else str(p)

    gold: dict = {"per_image_descriptions": dict(case.gold.per_image_descriptions)}
    for key, value in (
        ("patient_description", case.gold.patient_description),
        ("pathogenesis", case.gold.pathogenesis),
        ("overall_pathogenesis", case.gold.overall_pathogenesis),
        ("syndrome", case.gold.syndrome),
        ("treatment_principle", case.gold.treatment_principle),
        ("formula_name", case.gold.formula_name),
        ("prescription", case.gold.prescription_text),
    ):
        if value is not None:
            gold[key] = value
    return {
        "case_id": case.case_id,
        "visit_index": case.visit_index,
        "history": case.history,
        "physical_signs": case.physical_signs,
        "symptoms": case.symptoms,
        "images": [
            {
                "id": img.id,
                "path": rel(img.path),
                "view_tag": img.view_tag,
                **({"annotation": img.annotation} if img.annotation is not None else {}),
            }
            for img in case.images
        ],
        "gold": gold,
    }


def load_corpus_with_diagnostics(
    root: str | Path,
) -> tuple[list[ClinicalCase], list[CaseRejection]]:
    """Load every parseable case; invalid cases are returned as rejections."""
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise CorpusError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"manifest is not valid JSON: {exc}") from exc
    if "cases" not in manifest or not isinstance(manifest["cases"], list):
        raise CorpusError("manifest must contain a `cases` list")

    cases: list[ClinicalCase] = []
    rejections: list[CaseRejection] = []
    seen: set[tuple[str, int]] = set()
    for name in manifest["cases"]:
        path = root / name
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            case = _case_from_dict(doc, root=root, source=path)
            if case.key in seen:
                raise ValueError(f"duplicate (case_id, visit_index) {case.key} in {path}")
            seen.add(case.key)
            cases.append(case)
        except (OSError, ValueError, PrescriptionError) as exc:
            rejections.append(CaseRejection(path=path, reason=str(exc)))
    cases.sort(key=lambda c: c.key)
    return cases, rejections


def load_corpus(root: str | Path) -> list[ClinicalCase]:
    cases, _ = load_corpus_with_diagnostics(root)
    return cases
