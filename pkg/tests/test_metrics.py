from __future__ import annotations

import random

import pytest
from hypothesis import given, strategies as st

from tcmderm import metrics
from tcmderm.metrics import MetricTable, TokenSeq, bleu4, build_table, corpus_item_score, rouge_l, tokenize

from .oracles import brute_bleu4, brute_rouge_l


def seq(*tokens: str) -> TokenSeq:
    return TokenSeq(tuple(tokens), " ".join(tokens))


class TestTokenize:
    def test_cjk_chars_are_single_tokens(self):
        assert tokenize("血热证").tokens == ("血", "热", "证")

    def test_ascii_words(self):
        assert tokenize("BLEU test").tokens == ("BLEU", "test")

    def test_mixed_cjk_and_words(self):
        assert tokenize("清heat解toxin").tokens == ("清", "heat", "解", "toxin")

    def test_punctuation_dropped(self):
        assert tokenize("红斑, 鳞屑; dry-skin").tokens == ("红", "斑", "鳞", "屑", "dry", "skin")

    def test_empty_text(self):
        assert tokenize("").tokens == ()

    def test_source_retained(self):
        assert tokenize("abc 血").source == "abc 血"

    def test_character_class_rule(self):
        # every CJK codepoint alone, every non-CJK word char merged
        text = "治blood燥dry"
        toks = tokenize(text).tokens
        for t in toks:
            if len(t) == 1 and metrics._is_cjk(t):
                continue
            assert all(not metrics._is_cjk(c) for c in t)
        assert toks == ("治", "blood", "燥", "dry")


class TestBleu4:
    def test_identity_ten_tokens(self):
        s = seq(*"abcdefghij")
        assert bleu4(s, s) == 1.0

    def test_manual_ngram_example(self):
        # precisions 4/5, 3/4, 2/3, 1/2 -> (0.2)^(1/4)
        score = bleu4(seq(*"abcde"), seq(*"abcdf"))
        assert score == pytest.approx(0.2 ** 0.25, abs=1e-12)

    def test_disjoint_is_zero(self):
        assert bleu4(seq("x", "y"), seq("a", "b")) == 0.0

    def test_empty_reference_raises(self):
        with pytest.raises(ValueError):
            bleu4(seq("a"), TokenSeq((), ""))

    def test_empty_candidate_is_zero(self):
        assert bleu4(TokenSeq((), ""), seq("a")) == 0.0

    def test_brevity_penalty(self):
        # single-token candidate fully matching: BP = exp(1 - 4/1)
        score = bleu4(seq("a"), seq("a", "b", "c", "d"))
        assert score == pytest.approx(pytest.approx(2.718281828459045 ** -3), rel=1e-9)

    @given(st.lists(st.sampled_from("abc血热燥def"), min_size=1, max_size=20))
    def test_identity_always_one(self, tokens):
        s = TokenSeq(tuple(tokens), "")
        assert bleu4(s, s) == 1.0


class TestRougeL:
    def test_identity(self):
        s = seq(*"abcdef")
        assert rouge_l(s, s) == 1.0

    def test_lcs_example(self):
        assert rouge_l(seq(*"abcd"), seq("a", "c", "b", "d")) == pytest.approx(0.75)

    def test_disjoint(self):
        assert rouge_l(seq("x"), seq("a")) == 0.0

    def test_empty_reference_raises(self):
        with pytest.raises(ValueError):
            rouge_l(seq("a"), TokenSeq((), ""))

    def test_empty_candidate_is_zero(self):
        assert rouge_l(TokenSeq((), ""), seq("a")) == 0.0

    @given(st.lists(st.sampled_from("ab热燥c"), min_size=1, max_size=15))
    def test_identity_always_one(self, tokens):
        s = TokenSeq(tuple(tokens), "")
        assert rouge_l(s, s) == 1.0


def test_metrics_match_brute_force_oracles_on_random_pairs():
    rng = random.Random(20260810)
    alphabet = list("abcd") + ["血", "热", "燥"]
    for _ in range(200):
        cand = [rng.choice(alphabet) for _ in range(rng.randint(1, 18))]
        ref = [rng.choice(alphabet) for _ in range(rng.randint(1, 18))]
        cand_seq, ref_seq = TokenSeq(tuple(cand), ""), TokenSeq(tuple(ref), "")
        assert abs(bleu4(cand_seq, ref_seq) - brute_bleu4(cand, ref)) <= 1e-12
        assert abs(rouge_l(cand_seq, ref_seq) - brute_rouge_l(cand, ref)) <= 1e-12


class TestCorpusItemScore:
    def test_single_pair(self):
        assert corpus_item_score([("血热", "血热")], "BLEU-4") == 1.0

    def test_mean_of_two(self):
        pairs = [(seq(*"abcdefghij"), seq(*"abcdefghij")), (seq("x"), seq("q"))]
        assert corpus_item_score(pairs, "ROUGE-L") == pytest.approx(0.5)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            corpus_item_score([], "BLEU-4")

    def test_equals_recomputed_mean(self):
        rng = random.Random(7)
        pairs = []
        for _ in range(5):
            cand = [rng.choice("abcde") for _ in range(rng.randint(1, 10))]
            ref = [rng.choice("abcde") for _ in range(rng.randint(1, 10))]
            pairs.append((TokenSeq(tuple(cand), ""), TokenSeq(tuple(ref), "")))
        expected = sum(bleu4(c, r) for c, r in pairs) / len(pairs)
        assert abs(corpus_item_score(pairs, "BLEU-4") - expected) <= 1e-12


class TestMetricTable:
    def test_total_row_from_reported_pair(self):
        table = build_table(
            {"description": {"m": 0.2298}, "pathogenesis": {"m": 0.1246}}, "BLEU-4"
        )
        assert table.total_display("m") == "0.1772"

    def test_total_rounding_half_up(self):
        table = build_table(
            {"description": {"m": 0.0714}, "pathogenesis": {"m": 0.0105}}, "BLEU-4"
        )
        assert table.total_display("m") == "0.0410"

    def test_single_item_total_is_item(self):
        table = build_table({"only": {"m": 0.4242}}, "ROUGE-L")
        assert table.total["m"] == pytest.approx(0.4242)
        assert table.total_display("m") == "0.4242"

    def test_total_is_mean_within_1e12(self):
        rows = {f"i{k}": {"a": 0.1 * k, "b": 0.07 * k} for k in range(1, 6)}
        table = build_table(rows, "BLEU-4")
        for model in ("a", "b"):
            expected = sum(rows[i][model] for i in rows) / len(rows)
            assert abs(table.total[model] - expected) <= 1e-12

    def test_ragged_input_names_cell(self):
        with pytest.raises(ValueError, match="missing cell.*i2.*b"):
            build_table({"i1": {"a": 0.1, "b": 0.2}, "i2": {"a": 0.3}}, "BLEU-4")

    def test_markdown_and_csv_have_total(self):
        table = build_table({"i": {"m": 0.5}}, "BLEU-4")
        assert "Total" in table.to_markdown()
        assert table.to_csv().splitlines()[-1].startswith("Total,")


@given(
    st.lists(st.sampled_from("abc血热"), min_size=1, max_size=12),
    st.lists(st.sampled_from("abc血热"), min_size=1, max_size=12),
)
def test_scores_bounded_unit_interval(cand, ref):
    cand_seq = TokenSeq(tuple(cand), "")
    ref_seq = TokenSeq(tuple(ref), "")
    assert 0.0 <= bleu4(cand_seq, ref_seq) <= 1.0
    assert 0.0 <= rouge_l(cand_seq, ref_seq) <= 1.0
