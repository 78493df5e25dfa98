"""Judge invocation, local recomputation of deterministic fields, aggregation.

Judges run at temperature 0 with one strict-JSON retry on malformed output.
Formula-defined sub-scores (herb matching, compatibility, the derived
section score and total) are recomputed locally after parsing; when the
judge's arithmetic disagrees, the record is flagged and the local value is
authoritative.  Report display rounding is truncation at 4 decimals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from decimal import ROUND_DOWN, Decimal

from ..backends import Backend, BackendError, ChatRequest, Message, TextPart
from ..cases import Prescription, PrescriptionError, parse_prescription
from .scoring import PairRule, compatibility_point, herb_match
from .verdicts import ReasonVerdict, Verdict, VerdictError, parse_verdict

_RETRY_NUDGE = (
    "Your previous reply could not be parsed. Return only the JSON object in the "
    "required format, with no surrounding text."
)

_NUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class JudgeRunRecord:
    judge_id: str
    case_id: str
    model_label: str
    raw_text: str
    verdict: Verdict | None = None
    error: str | None = None
    error_kind: str | None = None
    repaired: bool = False
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if (self.verdict is None) == (self.error is None):
            raise ValueError("exactly one of verdict/error must be set")


def invoke_judge(
    backend: Backend, request: ChatRequest, kind: str
) -> tuple[Verdict | None, str, bool, str | None, str | None]:
    """One judge call plus one strict-JSON retry; returns parse outcome parts."""
    try:
        reply = backend.complete(request)
    except BackendError as exc:
        return None, "", False, str(exc), type(exc).__name__
    raw = reply.text
    try:
        verdict, repaired = parse_verdict(raw, kind)
        return verdict, raw, repaired, None, None
    except VerdictError:
        pass

    retry = ChatRequest(
        messages=request.messages + (Message(role="user", parts=(TextPart(_RETRY_NUDGE),)),),
        max_output_tokens=request.max_output_tokens,
        temperature=request.temperature,
        request_tag=f"{request.request_tag}.retry" if request.request_tag else "retry",
    )
    try:
        reply2 = backend.complete(retry)
    except BackendError as exc:
        return None, raw, False, str(exc), type(exc).__name__
    try:
        verdict, repaired = parse_verdict(reply2.text, kind)
        return verdict, reply2.text, repaired, None, None
    except VerdictError as exc:
        return None, reply2.text, False, str(exc), type(exc).__name__


def reconcile_reason(
    verdict: ReasonVerdict,
    predicted_prescription: str | Prescription | None,
    label_prescription: Prescription,
    alias_table: dict[str, str],
    pair_table: list[PairRule],
) -> tuple[ReasonVerdict, tuple[str, ...]]:
    """Recompute herb matching and compatibility locally; local values win."""
    flags: list[str] = []
    predicted: Prescription | None
    if isinstance(predicted_prescription, str):
        try:
            predicted = (
                parse_prescription(predicted_prescription)
                if predicted_prescription.strip()
                else None
            )
        except PrescriptionError:
            predicted = None
            flags.append("prediction-prescription-unparseable")
    else:
        predicted = predicted_prescription

    local = herb_match(predicted or [], label_prescription, alias_table)
    names = local.identical if predicted is None else sorted(
        {n for n in _canonical(predicted, alias_table)}
    )
    local_compat = compatibility_point(names, pair_table)

    if abs(verdict.herb_matching_score - local.score) > _NUM_TOLERANCE:
        flags.append("herb-score-mismatch")
    if verdict.identical_count != local.identical_count:
        flags.append("identical-count-mismatch")
    if verdict.label_total != local.label_total:
        flags.append("label-total-mismatch")
    if set(map(str.casefold, verdict.identical_list)) != set(
        map(str.casefold, local.identical)
    ):
        flags.append("identical-list-mismatch")
    if verdict.matching_rate != local.rate:
        flags.append("matching-rate-mismatch")
    if abs(verdict.compatibility - local_compat) > _NUM_TOLERANCE:
        flags.append("compatibility-mismatch")

    if not flags:
        return verdict, ()

    formula_score = verdict.formula_name_match + local.score + local_compat
    total = (
        verdict.completeness_score
        + verdict.pathomechanism_score
        + verdict.syndrome_score
        + verdict.treatment_score
        + formula_score
    )
    corrected = replace(
        verdict,
        herb_matching_score=local.score,
        identical_count=local.identical_count,
        label_total=local.label_total,
        identical_list=local.identical,
        matching_rate=local.rate,
        compatibility=local_compat,
        formula_score=formula_score,
        total=total,
    )
    return corrected, tuple(flags)


def _canonical(prescription: Prescription, alias_table: dict[str, str]):
    from .scoring import canonical_names

    return canonical_names(prescription, alias_table)


def trunc4(value: float) -> str:
    """4-decimal display rounding by truncation (judge-report convention)."""
    return str(Decimal(repr(value)).quantize(Decimal("0.0001"), rounding=ROUND_DOWN))


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def _population_stddev(values: list[float]) -> float:
    mu = _mean(values)
    return math.sqrt(sum((v - mu) ** 2 for v in values) / len(values))


@dataclass
class ModelAggregate:
    model_label: str
    per_judge_total_mean: dict[str, float]
    cross_judge_mean: float
    dimension_means: dict[str, float]
    per_judge_stddev: dict[str, float]
    mean_stddev: float
    parsed: int
    parse_errors: int

    @property
    def cross_judge_mean_display(self) -> str:
        return trunc4(self.cross_judge_mean)


@dataclass
class AggregateReport:
    kind: str
    judges: list[str]
    models: dict[str, ModelAggregate] = field(default_factory=dict)

    def to_markdown(self) -> str:
        lines = [
            "| Model | " + " | ".join(self.judges) + " | Cross-judge mean |",
            "|" + "---|" * (len(self.judges) + 2),
        ]
        for label, agg in sorted(self.models.items()):
            cells = [
                trunc4(agg.per_judge_total_mean[j]) if j in agg.per_judge_total_mean else "-"
                for j in self.judges
            ]
            lines.append(
                f"| {label} | " + " | ".join(cells) + f" | {agg.cross_judge_mean_display} |"
            )
        dims = sorted({d for agg in self.models.values() for d in agg.dimension_means})
        lines.append("")
        lines.append("| Dimension | " + " | ".join(sorted(self.models)) + " |")
        lines.append("|" + "---|" * (len(self.models) + 1))
        for dim in dims:
            cells = [
                trunc4(self.models[m].dimension_means.get(dim, 0.0))
                for m in sorted(self.models)
            ]
            lines.append(f"| {dim} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["model," + ",".join(self.judges) + ",cross_judge_mean"]
        for label, agg in sorted(self.models.items()):
            cells = [
                trunc4(agg.per_judge_total_mean[j]) if j in agg.per_judge_total_mean else ""
                for j in self.judges
            ]
            lines.append(f"{label}," + ",".join(cells) + f",{agg.cross_judge_mean_display}")
        return "\n".join(lines) + "\n"


def aggregate(records: list[JudgeRunRecord]) -> AggregateReport:
    """Per-model means by judge, cross-judge means, and population stddevs."""
    parsed = [r for r in records if r.verdict is not None]
    if not parsed:
        raise ValueError("no parsed verdicts to aggregate")
    kinds = {r.verdict.kind for r in parsed}
    if len(kinds) != 1:
        raise ValueError(f"mixed verdict kinds: {sorted(kinds)}")
    kind = kinds.pop()
    # every judge that was actually called gets a column, even if all of its
    # replies failed to parse ("-" marks records not tied to any judge)
    judges = sorted({r.judge_id for r in records if r.judge_id != "-"})
    report = AggregateReport(kind=kind, judges=judges)

    for label in sorted({r.model_label for r in records}):
        model_records = [r for r in records if r.model_label == label]
        model_parsed = [r for r in model_records if r.verdict is not None]
        if not model_parsed:
            continue
        # canonical (judge, case) order so results are exactly
        # permutation-invariant over record order
        model_parsed.sort(key=lambda r: (r.judge_id, r.case_id))
        per_judge_totals: dict[str, list[float]] = {}
        per_judge_dims: dict[str, dict[str, list[float]]] = {}
        for record in model_parsed:
            per_judge_totals.setdefault(record.judge_id, []).append(record.verdict.total)
            dims = per_judge_dims.setdefault(record.judge_id, {})
            for dim, score in record.verdict.section_scores().items():
                dims.setdefault(dim, []).append(score)
        total_means = {j: _mean(per_judge_totals[j]) for j in sorted(per_judge_totals)}
        stddevs = {j: _population_stddev(per_judge_totals[j]) for j in sorted(per_judge_totals)}
        dim_names = sorted({d for dims in per_judge_dims.values() for d in dims})
        dimension_means = {
            d: _mean([_mean(per_judge_dims[j][d]) for j in sorted(per_judge_dims)
                      if d in per_judge_dims[j]])
            for d in dim_names
        }
        report.models[label] = ModelAggregate(
            model_label=label,
            per_judge_total_mean=total_means,
            cross_judge_mean=_mean(list(total_means.values())),
            dimension_means=dimension_means,
            per_judge_stddev=stddevs,
            mean_stddev=_mean(list(stddevs.values())),
            parsed=len(model_parsed),
            parse_errors=len(model_records) - len(model_parsed),
        )
    return report
