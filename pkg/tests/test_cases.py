from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from tcmderm.cases import (
    CorpusError,
    PrescriptionError,
    _split_segments,
    case_to_dict,
    load_corpus,
    load_corpus_with_diagnostics,
    parse_prescription,
)

from .conftest import write_corpus


class TestParsePrescription:
    def test_showcase_entries(self):
        p = parse_prescription("Radix Rehmanniae (raw, 20 g), Poria (20 g)")
        assert len(p.entries) == 2
        first, second = p.entries
        assert first.name == "Radix Rehmanniae"
        assert first.processing == "raw"
        assert (first.dosage.amount, first.dosage.unit) == (20.0, "g")
        assert second.name == "Poria"
        assert second.processing is None
        assert second.dosage.amount == 20.0

    def test_minimal_entry(self):
        p = parse_prescription("Poria")
        assert len(p.entries) == 1
        assert p.entries[0].dosage is None
        assert p.entries[0].processing is None

    def test_charred_processing(self):
        p = parse_prescription("Semen Arecae (charred, 10 g)")
        entry = p.entries[0]
        assert entry.name == "Semen Arecae"
        assert entry.processing == "charred"
        assert entry.dosage.amount == 10.0

    def test_chinese_delimiters_and_parens(self):
        p = parse_prescription("生地黄（生，20克）、茯苓（20克）")
        assert [e.name for e in p.entries] == ["生地黄", "茯苓"]
        assert p.entries[0].processing == "生"
        assert p.entries[0].dosage.unit == "克"

    def test_newline_delimiter(self):
        p = parse_prescription("Poria (20 g)\nKu Shen (10 g)")
        assert [e.name for e in p.entries] == ["Poria", "Ku Shen"]

    def test_multiple_processing_tokens(self):
        p = parse_prescription("Gan Cao (honey-fried, sliced, 6 g)")
        assert p.entries[0].processing == "honey-fried, sliced"

    def test_empty_text_raises(self):
        with pytest.raises(PrescriptionError):
            parse_prescription("  ")

    def test_entry_with_empty_name_collected(self):
        errors: list[str] = []
        p = parse_prescription("Poria (20 g), (10 g)", errors)
        assert [e.name for e in p.entries] == ["Poria"]
        assert len(errors) == 1

    def test_all_entries_invalid_raises(self):
        with pytest.raises(PrescriptionError):
            parse_prescription("(20 g)")

    def test_raw_text_is_substring(self):
        text = "Radix Rehmanniae (raw, 20 g), Poria (20 g)"
        for entry in parse_prescription(text).entries:
            assert entry.raw_text in text

    @given(
        st.lists(
            st.sampled_from(["Poria", "Ku Shen", "Zi Cao (10 g)", "Gan Cao (raw, 6 g)", "生地黄"]),
            min_size=1,
            max_size=8,
        ),
        st.sampled_from([", ", "，", "\n", "、"]),
    )
    def test_no_entry_lost(self, names, delim):
        text = delim.join(names)
        p = parse_prescription(text)
        assert len(p.entries) == len(names)
        segments = _split_segments(text)
        assert len(segments) == len(names)
        for entry in p.entries:
            assert entry.raw_text in text


class TestLoadCorpus:
    def test_fixture_corpus_loads(self, tmp_path):
        write_corpus(tmp_path / "corpus", n_cases=2, images_per_case=3)
        cases = load_corpus(tmp_path / "corpus")
        assert len(cases) == 2
        assert sum(len(c.images) for c in cases) == 6
        assert all(c.gold.prescription is not None for c in cases)

    def test_missing_symptoms_rejected_with_field_name(self, tmp_path):
        def drop_symptoms(docs):
            del docs[0]["symptoms"]

        write_corpus(tmp_path / "corpus", n_cases=2, mutate=drop_symptoms)
        cases, rejections = load_corpus_with_diagnostics(tmp_path / "corpus")
        assert len(cases) == 1
        assert len(rejections) == 1
        assert "symptoms" in rejections[0].reason

    def test_dangling_image_rejects_only_that_case(self, tmp_path):
        root = tmp_path / "corpus"
        docs = write_corpus(root, n_cases=3)
        (root / docs[1]["images"][0]["path"]).unlink()
        cases, rejections = load_corpus_with_diagnostics(root)
        assert len(cases) == 2
        assert len(rejections) == 1
        assert docs[1]["images"][0]["path"] in rejections[0].reason

    def test_missing_manifest_is_fatal(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(CorpusError):
            load_corpus(tmp_path / "empty")

    def test_duplicate_case_visit_rejected(self, tmp_path):
        def clone(docs):
            docs[1]["case_id"] = docs[0]["case_id"]
            docs[1]["visit_index"] = docs[0]["visit_index"]

        root = tmp_path / "corpus"
        docs = write_corpus(root, n_cases=2, mutate=clone)
        # rewrite manifest to include both files despite equal ids
        (root / "c001_dup.json").write_text(
            json.dumps(docs[1], ensure_ascii=False), encoding="utf-8"
        )
        manifest = json.loads((root / "manifest.json").read_text())
        cases, rejections = load_corpus_with_diagnostics(root)
        assert len(cases) == 1
        assert any("duplicate" in r.reason for r in rejections)

    def test_bad_extension_rejected(self, tmp_path):
        def bad_ext(docs):
            docs[0]["images"][0]["path"] = "images/evil.bmp"

        root = tmp_path / "corpus"
        write_corpus(root, n_cases=1, mutate=bad_ext)
        (root / "images" / "evil.bmp").write_bytes(b"x")
        cases, rejections = load_corpus_with_diagnostics(root)
        assert not cases
        assert "format" in rejections[0].reason

    def test_round_trip(self, tmp_path):
        root = tmp_path / "corpus"
        write_corpus(root, n_cases=3)
        cases = load_corpus(root)
        for case in cases:
            doc = case_to_dict(case, root=root)
            path = root / f"rt_{case.case_id}.json"
            path.write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")
        manifest = {"version": 1, "cases": [f"rt_{c.case_id}.json" for c in cases]}
        rt_root = root  # same images referenced relatively
        (rt_root / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")
        reloaded = load_corpus(rt_root)
        assert reloaded == cases

    def test_cases_sorted_by_key(self, tmp_path):
        root = tmp_path / "corpus"
        write_corpus(root, n_cases=4)
        cases = load_corpus(root)
        assert [c.case_id for c in cases] == sorted(c.case_id for c in cases)
