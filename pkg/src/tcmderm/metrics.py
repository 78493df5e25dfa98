"""Lexical overlap metrics (BLEU-4, ROUGE-L) with CJK-aware tokenization.

Tokenization rule: every CJK codepoint is its own token; contiguous runs of
non-CJK word characters form one token; whitespace and punctuation delimit
and are dropped.  BLEU-4 is the geometric mean of modified n-gram precisions
(n = 1..4) times the brevity penalty.  Zero match counts with a nonzero
denominator are smoothed to EPSILON; orders where the candidate is too short
to have any n-gram are dropped from the mean (so identical inputs always
score exactly 1.0); no unigram overlap at all scores a hard 0.  ROUGE-L is
the LCS-based F1 with beta = 1.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

EPSILON = 1e-9

_CJK_RANGES = (
    (0x3400, 0x4DBF),   # extension A
    (0x4E00, 0x9FFF),   # unified ideographs
    (0xF900, 0xFAFF),   # compatibility ideographs
)


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


@dataclass(frozen=True)
class TokenSeq:
    """A tokenized text; retains the source string it came from."""

    tokens: tuple[str, ...]
    source: str

    def __post_init__(self) -> None:
        if any(not t for t in self.tokens):
            raise ValueError("TokenSeq must not contain empty tokens")

    def __len__(self) -> int:
        return len(self.tokens)


def tokenize(text: str) -> TokenSeq:
    """Split text into CJK single-character tokens and non-CJK word chunks."""
    tokens: list[str] = []
    word: list[str] = []

    def flush() -> None:
        if word:
            tokens.append("".join(word))
            word.clear()

    for ch in text:
        if _is_cjk(ch):
            flush()
            tokens.append(ch)
        elif ch.isalnum() or ch == "_":
            word.append(ch)
        else:
            flush()
    flush()
    return TokenSeq(tuple(tokens), text)


def _as_tokens(value: TokenSeq | str) -> TokenSeq:
    return value if isinstance(value, TokenSeq) else tokenize(value)


def _ngram_counts(tokens: tuple[str, ...], n: int) -> Counter:
    return Counter(tokens[i : i + n] for i in range(len(tokens) - n + 1))


def bleu4(candidate: TokenSeq | str, reference: TokenSeq | str) -> float:
    """Sentence-level smoothed BLEU-4 in [0, 1]."""
    cand = _as_tokens(candidate)
    ref = _as_tokens(reference)
    if not ref.tokens:
        raise ValueError("bleu4 reference must be non-empty")
    if not cand.tokens:
        return 0.0

    log_sum = 0.0
    orders = 0
    for n in range(1, 5):
        cand_counts = _ngram_counts(cand.tokens, n)
        total = sum(cand_counts.values())
        if total == 0:
            continue  # candidate too short for this order
        ref_counts = _ngram_counts(ref.tokens, n)
        matched = sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
        if matched == 0:
            if n == 1:
                return 0.0
            precision = EPSILON
        else:
            precision = matched / total
        log_sum += math.log(precision)
        orders += 1

    geo_mean = math.exp(log_sum / orders)
    c, r = len(cand.tokens), len(ref.tokens)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * geo_mean


def _lcs_length(a: tuple[str, ...], b: tuple[str, ...]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: TokenSeq | str, reference: TokenSeq | str) -> float:
    """LCS-based F1 (beta = 1) in [0, 1]."""
    cand = _as_tokens(candidate)
    ref = _as_tokens(reference)
    if not ref.tokens:
        raise ValueError("rouge_l reference must be non-empty")
    if not cand.tokens:
        return 0.0
    lcs = _lcs_length(cand.tokens, ref.tokens)
    p = lcs / len(cand.tokens)
    r = lcs / len(ref.tokens)
    if p + r == 0.0:
        return 0.0
    return 2 * p * r / (p + r)


METRICS = {"BLEU-4": bleu4, "ROUGE-L": rouge_l}


def corpus_item_score(
    pairs: list[tuple[TokenSeq | str, TokenSeq | str]], metric: str
) -> float:
    """Arithmetic mean of sentence-level scores over (candidate, reference) pairs."""
    if not pairs:
        raise ValueError("corpus_item_score needs at least one pair")
    fn = METRICS[metric]
    return sum(fn(c, r) for c, r in pairs) / len(pairs)


def round4_half_up(value: float) -> str:
    """4-decimal display rounding, half-up, computed on the decimal repr."""
    return str(Decimal(repr(value)).quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))


@dataclass
class MetricTable:
    """Per-item scores by model, plus a Total row holding per-model means."""

    metric: str
    items: list[str]
    models: list[str]
    rows: dict[str, dict[str, float]]
    total: dict[str, float] = field(init=False)

    def __post_init__(self) -> None:
        for item in self.items:
            row = self.rows.get(item)
            if row is None:
                raise ValueError(f"missing row for item {item!r}")
            for model in self.models:
                if model not in row:
                    raise ValueError(f"missing cell: item {item!r}, model {model!r}")
        self.total = {
            m: sum(self.rows[i][m] for i in self.items) / len(self.items)
            for m in self.models
        }

    def total_display(self, model: str) -> str:
        # Display means are averaged in Decimal so e.g. {0.0714, 0.0105}
        # rounds from the exact 0.04095 rather than its float neighbor.
        mean = sum(
            (Decimal(repr(self.rows[i][model])) for i in self.items), Decimal(0)
        ) / len(self.items)
        return str(mean.quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))

    def to_markdown(self) -> str:
        lines = ["| Item | " + " | ".join(self.models) + " |"]
        lines.append("|" + "---|" * (len(self.models) + 1))
        for item in self.items:
            cells = [round4_half_up(self.rows[item][m]) for m in self.models]
            lines.append(f"| {item} | " + " | ".join(cells) + " |")
        lines.append(
            "| Total | " + " | ".join(self.total_display(m) for m in self.models) + " |"
        )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["item", *self.models])
        for item in self.items:
            writer.writerow([item, *(round4_half_up(self.rows[item][m]) for m in self.models)])
        writer.writerow(["Total", *(self.total_display(m) for m in self.models)])
        return buf.getvalue()


def build_table(item_scores: dict[str, dict[str, float]], metric: str) -> MetricTable:
    """Assemble a MetricTable; every model must be present in every item row."""
    items = list(item_scores)
    if not items:
        raise ValueError("build_table needs at least one item")
    models = list(item_scores[items[0]])
    return MetricTable(metric=metric, items=items, models=models, rows=item_scores)
