"""Staged three-agent inference chain.

Per case: an optional per-image recognition pass, then a two-call
representation stage (patient-level description, then pathogenesis
conditioned on it), then a two-call reasoning stage (overall pathogenesis,
then a labeled block parsed into syndrome / treatment / prescription,
conditioned on the overall pathogenesis).  Stage-2 prompts always embed the
stage-1 output verbatim.  Stages within a case are sequential; cases in a
batch run concurrently under the backend admission limit.
"""

from __future__ import annotations

import json
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .backends import Backend, BackendError, ChatRequest, ImagePart, Message, TextPart
from .cases import ClinicalCase, LesionImage
from .templates import load_stage_template

_MIME_BY_EXT = {".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg"}


class PipelineInputError(ValueError):
    """A stage precondition failed before any backend call."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


class ReasonParseError(ValueError):
    """The reason stage-2 block is missing a required labeled section."""

    def __init__(self, message: str, raw_text: str):
        super().__init__(message)
        self.raw_text = raw_text


@dataclass(frozen=True)
class AgentOutput:
    per_image: dict[str, str] = field(default_factory=dict)
    patient_description: str = ""
    pathogenesis: str = ""
    overall_pathogenesis: str = ""
    syndrome: str = ""
    treatment_principle: str = ""
    prescription_text: str = ""
    formula_name: str = ""
    provenance: tuple[tuple[str, str, str], ...] = ()

    def __post_init__(self) -> None:
        if self.pathogenesis and not self.patient_description:
            raise ValueError("pathogenesis set without patient_description")
        later = (self.syndrome, self.treatment_principle, self.prescription_text)
        if any(later) and not self.overall_pathogenesis:
            raise ValueError("reason stage-2 fields set without overall_pathogenesis")


@dataclass(frozen=True)
class PipelineRun:
    case_id: str
    model_label: str
    output: AgentOutput
    timings: dict[str, float] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors


@dataclass(frozen=True)
class RunOptions:
    include_rec: bool = False
    gold_rep: bool = False
    language: str = "en"


@dataclass(frozen=True)
class PipelineBackends:
    rec: Backend
    rep: Backend
    reason: Backend

    @classmethod
    def single(cls, backend: Backend) -> "PipelineBackends":
        return cls(rec=backend, rep=backend, reason=backend)


def _image_part(image: LesionImage) -> ImagePart:
    mime = _MIME_BY_EXT.get(image.path.suffix.lower())
    if mime is None:
        raise PipelineInputError(f"unsupported image format: {image.path}")
    data = image.path.read_bytes()
    if not data:
        raise PipelineInputError(f"image file is empty: {image.path}")
    return ImagePart(data=data, mime=mime)


def _request(parts: list, tag: str, temperature: float) -> ChatRequest:
    return ChatRequest(
        messages=(Message(role="user", parts=tuple(parts)),),
        request_tag=tag,
        temperature=temperature,
    )


def run_rec(
    backend: Backend,
    image: LesionImage,
    *,
    tag_prefix: str = "",
    language: str = "en",
    temperature: float = 0.0,
) -> str:
    """Describe one lesion image."""
    part = _image_part(image)  # validates before any backend call
    instruction = load_stage_template("rec_instruction", language)
    try:
        reply = backend.complete(
            _request([TextPart(instruction), part], f"{tag_prefix}rec.{image.id}", temperature)
        )
    except BackendError as exc:
        raise StageError("rec", exc) from exc
    return reply.text


@dataclass(frozen=True)
class RepResult:
    description: str
    pathogenesis: str | None
    stage2_error: str | None = None
    provenance: tuple[tuple[str, str, str], ...] = ()


def run_rep(
    backend: Backend,
    images: tuple[LesionImage, ...],
    *,
    tag_prefix: str = "",
    language: str = "en",
    temperature: float = 0.0,
) -> RepResult:
    """Two sequential calls: patient description, then pathogenesis conditioned on it."""
    if not images:
        raise PipelineInputError("run_rep needs at least one image")
    image_parts = [_image_part(img) for img in images]

    stage1_tag = f"{tag_prefix}rep_stage1"
    stage1 = load_stage_template("rep_stage1", language)
    try:
        reply1 = backend.complete(
            _request([TextPart(stage1), *image_parts], stage1_tag, temperature)
        )
    except BackendError as exc:
        raise StageError("rep_stage1", exc) from exc
    description = reply1.text

    stage2_tag = f"{tag_prefix}rep_stage2"
    stage2 = load_stage_template("rep_stage2", language).format(description=description)
    provenance = (("rep_stage1", stage1_tag, reply1.backend_id),)
    try:
        reply2 = backend.complete(
            _request([TextPart(stage2), *image_parts], stage2_tag, temperature)
        )
    except BackendError as exc:
        return RepResult(description, None, stage2_error=str(exc), provenance=provenance)
    return RepResult(
        description,
        reply2.text,
        provenance=provenance + (("rep_stage2", stage2_tag, reply2.backend_id),),
    )


# Labeled-section headers for the reason stage-2 block (English + Chinese).
_SECTION_SYNONYMS: dict[str, tuple[str, ...]] = {
    "syndrome": ("syndrome differentiation", "syndrome", "辨证", "证型"),
    "treatment": ("treatment principle", "treatment", "治法", "治则"),
    "formula": ("formula", "方名", "选方"),
    "prescription": ("prescription", "处方", "方药"),
}
_REQUIRED_SECTIONS = ("syndrome", "treatment", "prescription")

_HEADER_RE = re.compile(
    "(?:^|[\\n/|;；])\\s*(?P<name>"
    + "|".join(
        re.escape(s) for names in _SECTION_SYNONYMS.values() for s in names
    )
    + ")\\s*[:：]",
    re.IGNORECASE,
)
_CANONICAL = {
    syn.lower(): canonical
    for canonical, names in _SECTION_SYNONYMS.items()
    for syn in names
}


def parse_reason_block(text: str) -> dict[str, str]:
    """Extract labeled sections; raises ReasonParseError when one is missing."""
    found: dict[str, str] = {}
    matches = list(_HEADER_RE.finditer(text))
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        value = text[m.end() : end].strip().strip("/|;；").strip()
        found.setdefault(_CANONICAL[m.group("name").lower()], value)
    missing = [s for s in _REQUIRED_SECTIONS if s not in found]
    if missing:
        raise ReasonParseError(
            f"reason block missing section(s): {', '.join(missing)}", raw_text=text
        )
    found.setdefault("formula", "")
    return found


@dataclass(frozen=True)
class ReasonResult:
    overall_pathogenesis: str
    syndrome: str | None
    treatment: str | None
    prescription: str | None
    formula_name: str = ""
    stage2_error: str | None = None
    provenance: tuple[tuple[str, str, str], ...] = ()


def run_reason(
    backend: Backend,
    images: tuple[LesionImage, ...],
    history: str,
    signs: str,
    symptoms: str,
    description: str,
    pathogenesis: str,
    *,
    tag_prefix: str = "",
    language: str = "en",
    temperature: float = 0.0,
) -> ReasonResult:
    """Two sequential calls: overall pathogenesis, then the labeled decision block."""
    for name, value in (
        ("history", history),
        ("signs", signs),
        ("symptoms", symptoms),
        ("description", description),
        ("pathogenesis", pathogenesis),
    ):
        if value is None:
            raise PipelineInputError(f"run_reason input {name} must be present")
    image_parts = [_image_part(img) for img in images]

    stage1_tag = f"{tag_prefix}reason_stage1"
    stage1 = load_stage_template("reason_stage1", language).format(
        history=history,
        signs=signs,
        symptoms=symptoms,
        description=description,
        pathogenesis=pathogenesis,
    )
    try:
        reply1 = backend.complete(
            _request([TextPart(stage1), *image_parts], stage1_tag, temperature)
        )
    except BackendError as exc:
        raise StageError("reason_stage1", exc) from exc
    overall = reply1.text

    stage2_tag = f"{tag_prefix}reason_stage2"
    stage2 = load_stage_template("reason_stage2", language).format(
        overall_pathogenesis=overall
    )
    provenance = (("reason_stage1", stage1_tag, reply1.backend_id),)
    try:
        reply2 = backend.complete(
            _request([TextPart(stage2), *image_parts], stage2_tag, temperature)
        )
        sections = parse_reason_block(reply2.text)
    except (BackendError, ReasonParseError) as exc:
        return ReasonResult(
            overall, None, None, None, stage2_error=str(exc), provenance=provenance
        )
    return ReasonResult(
        overall_pathogenesis=overall,
        syndrome=sections["syndrome"],
        treatment=sections["treatment"],
        prescription=sections["prescription"],
        formula_name=sections["formula"],
        provenance=provenance + (("reason_stage2", stage2_tag, reply2.backend_id),),
    )


def run_full(
    backends: PipelineBackends,
    case: ClinicalCase,
    options: RunOptions = RunOptions(),
    *,
    model_label: str = "",
    temperature: float = 0.0,
) -> PipelineRun:
    """Full chain on one case; a failed stage voids all later stages."""
    prefix = f"{case.case_id}/"
    timings: dict[str, float] = {}
    errors: dict[str, str] = {}
    per_image: dict[str, str] = {}
    provenance: tuple[tuple[str, str, str], ...] = ()
    images = tuple(sorted(case.images, key=lambda i: i.id))

    if options.include_rec:
        start = time.monotonic()
        for img in images:
            try:
                per_image[img.id] = run_rec(
                    backends.rec, img, tag_prefix=prefix,
                    language=options.language, temperature=temperature,
                )
                provenance += (("rec", f"{prefix}rec.{img.id}", backends.rec.backend_id),)
            except (StageError, PipelineInputError) as exc:
                errors["rec"] = str(exc)
                break
        timings["rec"] = time.monotonic() - start

    output = AgentOutput(per_image=per_image, provenance=provenance)
    if errors:
        return PipelineRun(case.case_id, model_label, output, timings, errors)

    if options.gold_rep and case.gold.patient_description and case.gold.pathogenesis:
        description, pathogenesis = case.gold.patient_description, case.gold.pathogenesis
    else:
        start = time.monotonic()
        try:
            rep = run_rep(
                backends.rep, images, tag_prefix=prefix,
                language=options.language, temperature=temperature,
            )
        except (StageError, PipelineInputError) as exc:
            timings["rep"] = time.monotonic() - start
            errors["rep"] = str(exc)
            return PipelineRun(case.case_id, model_label, output, timings, errors)
        timings["rep"] = time.monotonic() - start
        provenance += rep.provenance
        if rep.stage2_error is not None:
            errors["rep"] = rep.stage2_error
            output = replace(output, patient_description=rep.description,
                             provenance=provenance)
            return PipelineRun(case.case_id, model_label, output, timings, errors)
        description, pathogenesis = rep.description, rep.pathogenesis

    output = replace(
        output,
        patient_description=description,
        pathogenesis=pathogenesis,
        provenance=provenance,
    )

    start = time.monotonic()
    try:
        reason = run_reason(
            backends.reason, images, case.history, case.physical_signs, case.symptoms,
            description, pathogenesis,
            tag_prefix=prefix, language=options.language, temperature=temperature,
        )
    except (StageError, PipelineInputError) as exc:
        timings["reason"] = time.monotonic() - start
        errors["reason"] = str(exc)
        return PipelineRun(case.case_id, model_label, output, timings, errors)
    timings["reason"] = time.monotonic() - start
    provenance += reason.provenance

    if reason.stage2_error is not None:
        errors["reason"] = reason.stage2_error
        output = replace(output, overall_pathogenesis=reason.overall_pathogenesis,
                         provenance=provenance)
        return PipelineRun(case.case_id, model_label, output, timings, errors)

    output = replace(
        output,
        overall_pathogenesis=reason.overall_pathogenesis,
        syndrome=reason.syndrome,
        treatment_principle=reason.treatment,
        prescription_text=reason.prescription,
        formula_name=reason.formula_name,
        provenance=provenance,
    )
    return PipelineRun(case.case_id, model_label, output, timings, errors)


def run_batch(
    backends: PipelineBackends,
    cases: list[ClinicalCase],
    options: RunOptions = RunOptions(),
    *,
    model_label: str = "",
    temperature: float = 0.0,
    concurrency: int = 1,
) -> list[PipelineRun]:
    """Run cases concurrently; one case's failure never aborts the batch."""

    def one(case: ClinicalCase) -> PipelineRun:
        try:
            return run_full(
                backends, case, options, model_label=model_label, temperature=temperature
            )
        except Exception as exc:  # defensive: isolate per-case failures
            return PipelineRun(
                case.case_id, model_label, AgentOutput(), {}, {"pipeline": str(exc)}
            )

    if concurrency <= 1:
        return [one(c) for c in cases]
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        return list(pool.map(one, cases))


def run_to_dict(run: PipelineRun) -> dict:
    """Content view of a run; timings stay out so artifacts are byte-stable."""
    return {
        "case_id": run.case_id,
        "model_label": run.model_label,
        "output": {
            "per_image": dict(run.output.per_image),
            "patient_description": run.output.patient_description,
            "pathogenesis": run.output.pathogenesis,
            "overall_pathogenesis": run.output.overall_pathogenesis,
            "syndrome": run.output.syndrome,
            "treatment_principle": run.output.treatment_principle,
            "prescription_text": run.output.prescription_text,
            "formula_name": run.output.formula_name,
            "provenance": [list(p) for p in run.output.provenance],
        },
        "errors": dict(run.errors),
    }


def run_from_dict(doc: dict) -> PipelineRun:
    out = doc["output"]
    output = AgentOutput(
        per_image=dict(out.get("per_image", {})),
        patient_description=out.get("patient_description", ""),
        pathogenesis=out.get("pathogenesis", ""),
        overall_pathogenesis=out.get("overall_pathogenesis", ""),
        syndrome=out.get("syndrome", ""),
        treatment_principle=out.get("treatment_principle", ""),
        prescription_text=out.get("prescription_text", ""),
        formula_name=out.get("formula_name", ""),
        provenance=tuple(tuple(p) for p in out.get("provenance", [])),
    )
    return PipelineRun(
        case_id=doc["case_id"],
        model_label=doc.get("model_label", ""),
        output=output,
        errors=dict(doc.get("errors", {})),
    )


def save_run(run: PipelineRun, run_dir: str | Path) -> Path:
    """Persist one case's run: content JSON plus timings in a sibling meta file."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    path = run_dir / f"{run.case_id}.json"
    path.write_text(
        json.dumps(run_to_dict(run), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    meta = run_dir / f"{run.case_id}.meta.json"
    meta.write_text(
        json.dumps({"timings": run.timings}, sort_keys=True) + "\n", encoding="utf-8"
    )
    return path


def load_runs(run_dir: str | Path) -> list[PipelineRun]:
    run_dir = Path(run_dir)
    runs = []
    for path in sorted(run_dir.glob("*.json")):
        if path.name.endswith(".meta.json"):
            continue
        runs.append(run_from_dict(json.loads(path.read_text(encoding="utf-8"))))
    return runs
