from __future__ import annotations

from fractions import Fraction

import pytest

from tcmderm.humaneval import (
    DIMENSIONS,
    ScoreSheet,
    SheetRejected,
    StudyError,
    StudyStore,
    close_study,
    compute_report,
    create_study,
    draw_mapping,
    reveal,
    submit_sheet,
)

from .oracles import def_population_variance

MODELS = ["model-alpha", "model-beta", "model-gamma", "model-delta", "model-epsilon"]


def sheet(evaluator="e1", case="c1", letter="A", value=7, **overrides) -> ScoreSheet:
    scores = {d: value for d in DIMENSIONS}
    scores.update(overrides)
    return ScoreSheet(evaluator_id=evaluator, case_id=case, letter=letter, scores=scores)


def make_study(models=None, seed=7):
    models = models or MODELS
    return create_study(
        models=models,
        cases={"c1": {"case_id": "c1"}, "c2": {"case_id": "c2"}},
        evaluators={"e1": "tok1", "e2": "tok2"},
        seed=seed,
    )


class TestBlindMapping:
    def test_five_models_bijection_onto_letters(self):
        mapping = draw_mapping("s", MODELS, seed=3)
        assert sorted(mapping.assignment.values()) == ["A", "B", "C", "D", "E"]
        assert len(set(mapping.assignment.values())) == 5

    def test_same_seed_same_mapping(self):
        m1 = draw_mapping("s", MODELS, seed=42)
        m2 = draw_mapping("s", MODELS, seed=42)
        assert m1.assignment == m2.assignment

    def test_two_models_letters_a_b(self):
        mapping = draw_mapping("s", ["m1", "m2"], seed=0)
        assert sorted(mapping.assignment.values()) == ["A", "B"]

    def test_seeds_produce_differing_mappings(self):
        baseline = draw_mapping("s", MODELS, seed=0).assignment
        assert any(
            draw_mapping("s", MODELS, seed=s).assignment != baseline for s in range(1, 101)
        )

    def test_duplicate_models_rejected(self):
        with pytest.raises(StudyError):
            draw_mapping("s", ["m", "m"], seed=1)

    def test_too_many_models_rejected(self):
        with pytest.raises(StudyError):
            draw_mapping("s", [f"m{i}" for i in range(27)], seed=1)


class TestSubmit:
    def test_all_tens_accepted(self):
        study = make_study()
        submit_sheet(study, sheet(value=10))
        assert study.sheets[0].total == 60

    def test_out_of_range_names_dimension(self):
        study = make_study()
        with pytest.raises(SheetRejected) as info:
            submit_sheet(study, sheet(readability=11))
        assert info.value.code == "out_of_range"
        assert info.value.field == "readability"

    def test_duplicate_rejected(self):
        study = make_study()
        submit_sheet(study, sheet())
        with pytest.raises(SheetRejected) as info:
            submit_sheet(study, sheet())
        assert info.value.code == "duplicate"

    def test_same_evaluator_other_letter_allowed(self):
        study = make_study()
        submit_sheet(study, sheet(letter="A"))
        submit_sheet(study, sheet(letter="B"))
        assert len(study.sheets) == 2

    def test_unknown_letter_rejected(self):
        study = make_study()
        with pytest.raises(SheetRejected) as info:
            submit_sheet(study, sheet(letter="Z"))
        assert info.value.code == "unknown_letter"

    def test_unknown_evaluator_rejected(self):
        study = make_study()
        with pytest.raises(SheetRejected) as info:
            submit_sheet(study, sheet(evaluator="intruder"))
        assert info.value.code == "unknown_evaluator"

    def test_missing_dimension_rejected(self):
        study = make_study()
        bad = ScoreSheet("e1", "c1", "A", {d: 5 for d in DIMENSIONS[:-1]})
        with pytest.raises(SheetRejected) as info:
            submit_sheet(study, bad)
        assert info.value.code == "missing_dimension"

    def test_non_integer_rejected(self):
        study = make_study()
        with pytest.raises(SheetRejected) as info:
            submit_sheet(study, sheet(readability=7.5))
        assert info.value.code == "bad_type"

    def test_closed_study_rejects(self):
        study = make_study()
        close_study(study)
        with pytest.raises(SheetRejected) as info:
            submit_sheet(study, sheet())
        assert info.value.code == "study_closed"


class TestReport:
    def test_identical_sheets_zero_variance(self):
        study = make_study()
        submit_sheet(study, sheet(evaluator="e1", value=8))
        submit_sheet(study, sheet(evaluator="e2", value=8))
        report = compute_report(study)
        stats = report.models["A"]
        assert all(v == 0 for v in stats.dimension_variances.values())
        assert stats.total_variance == 0

    def test_two_sheet_mean_and_variance(self):
        study = make_study()
        submit_sheet(study, sheet(evaluator="e1", lesion_description=6))
        submit_sheet(study, sheet(evaluator="e2", lesion_description=8))
        stats = compute_report(study).models["A"]
        assert stats.dimension_means["lesion_description"] == 7
        assert stats.dimension_variances["lesion_description"] == 1

    def test_total_mean_equals_sum_of_dimension_means_exactly(self):
        study = make_study()
        submit_sheet(study, sheet(evaluator="e1", value=7, readability=3))
        submit_sheet(study, sheet(evaluator="e2", value=4, lesion_description=9))
        submit_sheet(study, sheet(evaluator="e1", case="c2", value=5))
        stats = compute_report(study).models["A"]
        assert stats.total_mean == sum(stats.dimension_means.values(), Fraction(0))

    def test_thirds_are_exact(self):
        study = make_study()
        submit_sheet(study, sheet(evaluator="e1", value=7))
        submit_sheet(study, sheet(evaluator="e2", value=8))
        submit_sheet(study, sheet(evaluator="e1", case="c2", value=9))
        stats = compute_report(study).models["A"]
        assert stats.dimension_means["readability"] == Fraction(24, 3)

    def test_variance_matches_definitional_oracle(self):
        study = make_study()
        values = [3, 9, 4, 10]
        for i, v in enumerate(values):
            evaluator = "e1" if i % 2 == 0 else "e2"
            case = "c1" if i < 2 else "c2"
            submit_sheet(study, sheet(evaluator=evaluator, case=case, value=v))
        stats = compute_report(study).models["A"]
        totals = [v * len(DIMENSIONS) for v in values]
        assert float(stats.total_variance) == pytest.approx(
            def_population_variance(totals), abs=1e-9
        )

    def test_letters_before_reveal_names_after(self):
        study = make_study()
        submit_sheet(study, sheet())
        before = compute_report(study)
        assert set(before.models) <= set("ABCDE")
        assert not before.absent or all(k in "ABCDE" for k in before.absent)
        close_study(study)
        reveal(study)
        after = compute_report(study)
        assert all(k in MODELS for k in list(after.models) + after.absent)

    def test_zero_sheet_models_absent(self):
        study = make_study()
        submit_sheet(study, sheet(letter="B"))
        report = compute_report(study)
        assert "B" in report.models
        assert len(report.absent) == 4

    def test_report_is_pure(self):
        study = make_study()
        submit_sheet(study, sheet())
        r1 = compute_report(study).to_dict()
        r2 = compute_report(study).to_dict()
        assert r1 == r2

    def test_accounting_counts_only_accepted(self):
        study = make_study()
        submit_sheet(study, sheet())
        for bad in (sheet(), sheet(letter="Z"), sheet(readability=99)):
            with pytest.raises(SheetRejected):
                submit_sheet(study, bad)
        assert compute_report(study).sheet_count == 1


class TestReveal:
    def test_reveal_requires_close(self):
        study = make_study()
        with pytest.raises(StudyError, match="close"):
            reveal(study)

    def test_reveal_after_close(self):
        study = make_study()
        close_study(study)
        mapping = reveal(study)
        assert mapping.revealed is True


class TestStore:
    def test_event_log_round_trip(self, tmp_path):
        store = StudyStore(tmp_path)
        study = store.create(
            models=MODELS,
            cases={"c1": {"case_id": "c1"}},
            evaluators={"e1": "tok1"},
            seed=11,
            study_id="study-x",
        )
        store.submit("study-x", sheet())
        loaded = store.load("study-x")
        assert loaded.mapping.assignment == study.mapping.assignment
        assert len(loaded.sheets) == 1
        store.close("study-x")
        mapping = store.reveal("study-x")
        assert mapping.revealed
        assert store.load("study-x").mapping.revealed

    def test_duplicate_rejected_across_processes(self, tmp_path):
        store = StudyStore(tmp_path)
        store.create(models=["m1"], cases={"c1": {}}, evaluators={"e1": "t"},
                     seed=0, study_id="s")
        store.submit("s", sheet(letter="A"))
        with pytest.raises(SheetRejected):
            StudyStore(tmp_path).submit("s", sheet(letter="A"))

    def test_unknown_study(self, tmp_path):
        with pytest.raises(StudyError):
            StudyStore(tmp_path).load("nope")

    def test_create_twice_rejected(self, tmp_path):
        store = StudyStore(tmp_path)
        store.create(models=["m"], cases={"c": {}}, evaluators={"e": "t"}, seed=0,
                     study_id="dup")
        with pytest.raises(StudyError):
            store.create(models=["m"], cases={"c": {}}, evaluators={"e": "t"}, seed=0,
                         study_id="dup")


class TestStoreConcurrency:
    def test_concurrent_duplicates_accept_exactly_one(self, tmp_path):
        import threading

        store = StudyStore(tmp_path)
        store.create(models=["m1"], cases={"c1": {}}, evaluators={"e1": "t"},
                     seed=0, study_id="s")
        outcomes = []
        lock = threading.Lock()

        def submit():
            try:
                store.submit("s", sheet(letter="A"))
                with lock:
                    outcomes.append("ok")
            except SheetRejected:
                with lock:
                    outcomes.append("dup")

        threads = [threading.Thread(target=submit) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert outcomes.count("ok") == 1
        assert len(store.load("s").sheets) == 1
