"""Deterministic rubric sub-scorers: completeness, herb matching, contraindications.

Herb names are canonicalized before comparison: dosage and processing are
stripped, whitespace is collapsed, and aliases map to their canonical form
case-insensitively (unknown names pass through cleaned).  Matching ignores
dosage and processing by construction and collapses duplicates to sets.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from pathlib import Path
from typing import Iterable

from ..cases import HerbEntry, Prescription, _parse_entry

COMPLETENESS_RUBRICS = {"rep": 2, "reason": 5}


def _data_text(name: str) -> str:
    return resources.files("tcmderm").joinpath("data", name).read_text(encoding="utf-8")


def load_alias_table(path: str | Path | None = None) -> dict[str, str]:
    """Map of casefolded alias -> canonical name, from the shipped or a custom file."""
    raw = Path(path).read_text(encoding="utf-8") if path else _data_text("herb_aliases.json")
    doc = json.loads(raw)
    table: dict[str, str] = {}
    for canonical, aliases in doc["aliases"].items():
        table[_clean(canonical).casefold()] = canonical
        for alias in aliases:
            table[_clean(alias).casefold()] = canonical
    return table


@dataclass(frozen=True)
class PairRule:
    rule: str
    first: str
    second: str

    @property
    def key(self) -> frozenset[str]:
        return frozenset((self.first.casefold(), self.second.casefold()))


def load_pair_table(path: str | Path | None = None) -> list[PairRule]:
    raw = (
        Path(path).read_text(encoding="utf-8")
        if path
        else _data_text("herb_incompatibilities.json")
    )
    doc = json.loads(raw)
    return [PairRule(rule=r["rule"], first=r["pair"][0], second=r["pair"][1]) for r in doc["rules"]]


def score_completeness(items_answered: int, n: int, rubric: str) -> float:
    """Completeness points for the given rubric ("rep": 2 items, "reason": 5)."""
    if rubric not in COMPLETENESS_RUBRICS:
        raise ValueError(f"unknown rubric {rubric!r}")
    expected_n = COMPLETENESS_RUBRICS[rubric]
    if n != expected_n:
        raise ValueError(f"rubric {rubric!r} scores {expected_n} items, got n={n}")
    if not 0 <= items_answered <= n:
        raise ValueError(f"items_answered {items_answered} outside 0..{n}")
    if rubric == "reason":
        return items_answered / 5 * 5
    return {2: 5.0, 1: 2.5, 0: 0.0}[items_answered]


def _clean(name: str) -> str:
    return re.sub(r"\s+", " ", name).strip()


def normalize_herb(entry: HerbEntry | str, alias_table: dict[str, str]) -> str:
    """Canonical herb name: dosage/processing stripped, aliases resolved."""
    if isinstance(entry, HerbEntry):
        name = entry.name
    else:
        name = _parse_entry(entry.strip()).name
    name = _clean(name)
    return alias_table.get(name.casefold(), name)


def canonical_names(
    prescription: Prescription | Iterable[str], alias_table: dict[str, str]
) -> set[str]:
    entries = (
        prescription.entries if isinstance(prescription, Prescription) else prescription
    )
    return {normalize_herb(e, alias_table) for e in entries}


@dataclass(frozen=True)
class HerbMatch:
    score: float
    identical: tuple[str, ...]
    identical_count: int
    label_total: int
    rate: str


def _rate_string(identical: int, total: int) -> str:
    pct = Decimal(identical * 100) / Decimal(total)
    return f"{pct.quantize(Decimal('1'), rounding=ROUND_HALF_UP)}%"


def herb_match(
    predicted: Prescription | Iterable[str],
    label: Prescription | Iterable[str],
    alias_table: dict[str, str],
) -> HerbMatch:
    """Set-intersection herb score: |pred ∩ label| / |label| x 7."""
    label_names = canonical_names(label, alias_table)
    if not label_names:
        raise ValueError("label prescription must be non-empty")
    predicted_names = canonical_names(predicted, alias_table) if predicted else set()
    identical = sorted(predicted_names & label_names)
    score = len(identical) / len(label_names) * 7
    return HerbMatch(
        score=score,
        identical=tuple(identical),
        identical_count=len(identical),
        label_total=len(label_names),
        rate=_rate_string(len(identical), len(label_names)),
    )


@dataclass(frozen=True)
class ContraindicationHit:
    herb_a: str
    herb_b: str
    rule: str


def check_contraindications(
    names: Iterable[str], pair_table: list[PairRule]
) -> list[ContraindicationHit]:
    """All table pairs present together in the (canonical) name set."""
    present = {n.casefold(): n for n in names}
    hits = []
    for rule in pair_table:
        a, b = rule.first.casefold(), rule.second.casefold()
        if a in present and b in present:
            hits.append(
                ContraindicationHit(herb_a=present[a], herb_b=present[b], rule=rule.rule)
            )
    hits.sort(key=lambda h: (h.rule, h.herb_a, h.herb_b))
    return hits


def compatibility_point(names: Iterable[str], pair_table: list[PairRule]) -> float:
    return 0.0 if check_contraindications(names, pair_table) else 1.0
