"""Command-line entry point wiring corpus, pipeline, metrics, judging, and studies.

Exit codes: 0 success, 1 partial (per-case errors), 2 fatal.  Content
artifacts are byte-stable for a fixed seed and mock backends; anything
timing-related goes into `*.meta.*` files.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import datasets, kb, metrics, pipeline
from .backends import Backend, make_backend, TraceRecorder
from .cases import ClinicalCase, CorpusError, load_corpus_with_diagnostics
from .config import ConfigError, RunConfig, load_config
from .humaneval import ScoreSheet, SheetRejected, StudyError, StudyStore
from .judge import (
    JudgeRunRecord,
    aggregate,
    build_reason_prompt,
    build_rep_prompt,
    invoke_judge,
    load_alias_table,
    load_pair_table,
    reconcile_reason,
    trunc4,
)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_FATAL = 2


def _fatal(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(EXIT_FATAL)


def _load_corpus(config: RunConfig) -> list[ClinicalCase]:
    config.validate_paths(need_corpus=True)
    cases, rejections = load_corpus_with_diagnostics(config.corpus)
    for rejection in rejections:
        click.echo(f"warning: rejected {rejection.path.name}: {rejection.reason}", err=True)
    return cases


def case_text_block(case: ClinicalCase) -> str:
    return (
        f"Medical history: {case.history}\n"
        f"Physical signs: {case.physical_signs}\n"
        f"Current symptoms: {case.symptoms}"
    )


def gold_label_block(case: ClinicalCase) -> str:
    gold = case.gold
    parts = []
    if gold.overall_pathogenesis:
        parts.append(f"pathogenesis: {gold.overall_pathogenesis}")
    if gold.syndrome:
        parts.append(f"syndrome: {gold.syndrome}")
    if gold.treatment_principle:
        parts.append(f"treatment: {gold.treatment_principle}")
    if gold.formula_name:
        parts.append(f"formula: {gold.formula_name}")
    if gold.prescription_text:
        parts.append(f"prescription: {gold.prescription_text}")
    return "\n".join(parts)


def output_reason_block(run: pipeline.PipelineRun) -> str:
    out = run.output
    parts = []
    if out.overall_pathogenesis:
        parts.append(f"pathogenesis: {out.overall_pathogenesis}")
    if out.syndrome:
        parts.append(f"syndrome: {out.syndrome}")
    if out.treatment_principle:
        parts.append(f"treatment: {out.treatment_principle}")
    if out.formula_name:
        parts.append(f"formula: {out.formula_name}")
    if out.prescription_text:
        parts.append(f"prescription: {out.prescription_text}")
    return "\n".join(parts)


def output_rep_block(run: pipeline.PipelineRun) -> str:
    out = run.output
    parts = []
    if out.patient_description:
        parts.append(f"description: {out.patient_description}")
    if out.pathogenesis:
        parts.append(f"pathogenesis: {out.pathogenesis}")
    return "\n".join(parts)


@click.group()
@click.option("--config", "config_path", default=None, help="Path to the YAML run config.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--concurrency", type=int, default=None, help="Override the concurrency limit.")
@click.option("--out", "out_dir", default=None, help="Override the output directory.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, seed: int | None,
         concurrency: int | None, out_dir: str | None) -> None:
    """Staged TCM dermatology pipeline and evaluation toolkit."""
    ctx.obj = None
    if config_path is not None:
        try:
            ctx.obj = load_config(
                config_path, seed=seed, concurrency=concurrency, out=out_dir
            )
        except (ConfigError, json.JSONDecodeError) as exc:
            _fatal(str(exc))


def _require(config: RunConfig | None) -> RunConfig:
    if config is None:
        _fatal("--config is required for this command")
    return config


def pass_config(f):
    """Like click.pass_obj but demands that --config was given."""

    @click.pass_obj
    @functools.wraps(f)
    def wrapper(config, *args, **kwargs):
        return f(_require(config), *args, **kwargs)

    return wrapper


@main.command("build-datasets")
@click.option("--language", default=None, help="Template language for exports (en or zh).")
@pass_config
def build_datasets_cmd(config: RunConfig, language: str | None) -> None:
    """Build the three staged datasets and export them as JSON-lines."""
    language = language or config.language
    try:
        cases = _load_corpus(config)
    except (ConfigError, CorpusError) as exc:
        _fatal(str(exc))
    out_dir = config.out / "datasets"
    all_stats = []
    for build, kind in (
        (datasets.build_rec, "rec"),
        (datasets.build_rep, "rep"),
        (datasets.build_reason, "reason"),
    ):
        samples, stats = build(cases)
        datasets.export_conversations(samples, kind, out_dir, language)
        all_stats.append(stats)
        click.echo(
            f"{kind}: {stats.included} samples, {stats.excluded} excluded "
            f"of {stats.candidates} candidates"
        )
        for reason, count in sorted(stats.exclusions.items()):
            click.echo(f"  excluded ({reason}): {count}")
    if all(s.included == 0 for s in all_stats):
        click.echo("warning: corpus produced zero samples", err=True)
    stats_path = out_dir / "stats.json"
    stats_path.write_text(
        json.dumps(
            [
                {
                    "kind": s.kind,
                    "candidates": s.candidates,
                    "included": s.included,
                    "exclusions": s.exclusions,
                }
                for s in all_stats
            ],
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    click.echo(f"stats written to {stats_path}")


@main.command("run")
@click.option("--case", "case_filter", multiple=True, help="Only run these case ids.")
@click.option("--run-id", default=None, help="Run identifier (default: run<seed>).")
@click.option("--resume", "resume_id", default=None, help="Skip cases already completed in this run id.")
@click.option("--include-rec", is_flag=True, help="Also run per-image recognition.")
@click.option("--gold-rep", is_flag=True, help="Teacher-forced ablation: use gold stage-1 outputs.")
@click.option("--model-label", default="model", help="Label stored in run artifacts.")
@pass_config
def run_cmd(config: RunConfig, case_filter: tuple[str, ...], run_id: str | None,
            resume_id: str | None, include_rec: bool, gold_rep: bool,
            model_label: str) -> None:
    """Run the staged pipeline over the corpus and persist run artifacts."""
    try:
        cases = _load_corpus(config)
        backends = pipeline.PipelineBackends(
            rec=make_backend(config.backend_for("rec")),
            rep=make_backend(config.backend_for("rep")),
            reason=make_backend(config.backend_for("reason")),
        )
    except (ConfigError, CorpusError) as exc:
        _fatal(str(exc))

    if case_filter:
        known = {c.case_id for c in cases}
        unknown = [cid for cid in case_filter if cid not in known]
        if unknown:
            _fatal(f"unknown case id(s): {', '.join(unknown)}")
        cases = [c for c in cases if c.case_id in case_filter]

    run_id = resume_id or run_id or f"run{config.seed:04d}"
    run_dir = config.out / "runs" / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    trace = TraceRecorder(run_dir / "trace.meta.jsonl")
    for backend in (backends.rec, backends.rep, backends.reason):
        backend.trace = trace

    if resume_id:
        cases = [c for c in cases if not (run_dir / f"{c.case_id}.json").exists()]
        click.echo(f"resume: {len(cases)} case(s) left to run")

    options = pipeline.RunOptions(
        include_rec=include_rec, gold_rep=gold_rep, language=config.language
    )
    runs = pipeline.run_batch(
        backends, cases, options,
        model_label=model_label,
        temperature=config.gen_temperature,
        concurrency=config.concurrency,
    )
    failed = 0
    for run in runs:
        pipeline.save_run(run, run_dir)
        if run.errors:
            failed += 1
            click.echo(f"case {run.case_id}: errors {run.errors}", err=True)
    click.echo(f"run {run_id}: {len(runs) - failed}/{len(runs)} cases ok -> {run_dir}")
    if failed == len(runs) and runs:
        sys.exit(EXIT_FATAL)
    if failed:
        sys.exit(EXIT_PARTIAL)


_EVAL_ITEMS = (
    ("description", lambda o: o.patient_description, lambda g: g.patient_description),
    ("pathogenesis", lambda o: o.pathogenesis, lambda g: g.pathogenesis),
    ("overall_pathogenesis", lambda o: o.overall_pathogenesis, lambda g: g.overall_pathogenesis),
    ("syndrome", lambda o: o.syndrome, lambda g: g.syndrome),
    ("treatment", lambda o: o.treatment_principle, lambda g: g.treatment_principle),
    ("formula", lambda o: o.formula_name, lambda g: g.formula_name),
    ("prescription", lambda o: o.prescription_text, lambda g: g.prescription_text),
)


@main.command("eval-auto")
@click.option("--run-dir", "run_dirs", multiple=True, required=True,
              help="Run directory; repeat for one table column per model.")
@pass_config
def eval_auto_cmd(config: RunConfig, run_dirs: tuple[str, ...]) -> None:
    """Score run outputs against gold with BLEU-4 and ROUGE-L tables."""
    try:
        cases = {c.case_id: c for c in _load_corpus(config)}
    except (ConfigError, CorpusError) as exc:
        _fatal(str(exc))

    per_model_runs: dict[str, list[pipeline.PipelineRun]] = {}
    for run_dir in run_dirs:
        runs = pipeline.load_runs(run_dir)
        if not runs:
            _fatal(f"no run artifacts in {run_dir}")
        unpaired = sorted(r.case_id for r in runs if r.case_id not in cases)
        if unpaired:
            _fatal(f"run cases missing from corpus: {', '.join(unpaired)}")
        label = runs[0].model_label or Path(run_dir).name
        per_model_runs[label] = runs

    out_dir = config.out / "eval"
    out_dir.mkdir(parents=True, exist_ok=True)
    for metric in ("BLEU-4", "ROUGE-L"):
        item_scores: dict[str, dict[str, float]] = {}
        for item, from_output, from_gold in _EVAL_ITEMS:
            row: dict[str, float] = {}
            for label, runs in per_model_runs.items():
                pairs = []
                for run in runs:
                    candidate = from_output(run.output)
                    reference = from_gold(cases[run.case_id].gold)
                    if candidate is not None and reference:
                        pairs.append((candidate, reference))
                if pairs:
                    row[label] = metrics.corpus_item_score(pairs, metric)
            if row and len(row) == len(per_model_runs):
                item_scores[item] = row
            elif row:
                click.echo(f"warning: item {item} skipped (not present for all models)", err=True)
        if not item_scores:
            _fatal("no item could be paired with gold")
        table = metrics.build_table(item_scores, metric)
        slug = metric.lower().replace("-", "")
        (out_dir / f"{slug}.csv").write_text(table.to_csv(), encoding="utf-8")
        (out_dir / f"{slug}.md").write_text(table.to_markdown(), encoding="utf-8")
        click.echo(f"{metric}:")
        click.echo(table.to_markdown())
    click.echo(f"tables written to {out_dir}")


@main.command("judge")
@click.option("--run-dir", "run_dirs", multiple=True, required=True,
              help="Run directory; repeat to judge several models.")
@click.option("--rubric", type=click.Choice(["reason", "rep"]), default="reason",
              help="Which rubric to apply.")
@click.option("--k", default=5, show_default=True, help="Reference chunks per judge call.")
@click.option("--rep-with-label", is_flag=True,
              help="Include the gold label in 25-point rubric prompts.")
@pass_config
def judge_cmd(config: RunConfig, run_dirs: tuple[str, ...], rubric: str, k: int,
              rep_with_label: bool) -> None:
    """Judge run outputs with the RAG-augmented rubric and aggregate scores."""
    try:
        cases = {c.case_id: c for c in _load_corpus(config)}
        config.validate_paths(need_kb=True)
        judges = [make_backend(c) for c in config.judge_backends()]
    except (ConfigError, CorpusError) as exc:
        _fatal(str(exc))
    index = kb.index_corpus(config.kb)
    alias_table = load_alias_table()
    pair_table = load_pair_table()

    records: list[JudgeRunRecord] = []
    for run_dir in run_dirs:
        runs = pipeline.load_runs(run_dir)
        for run in runs:
            case = cases.get(run.case_id)
            if case is None:
                _fatal(f"run case {run.case_id} missing from corpus")
            model_output = (
                output_reason_block(run) if rubric == "reason" else output_rep_block(run)
            )
            if not model_output:
                records.append(
                    JudgeRunRecord(
                        judge_id="-", case_id=run.case_id, model_label=run.model_label,
                        raw_text="", error="run has no output to judge",
                        error_kind="EmptyOutput",
                    )
                )
                continue
            query = kb.build_rag_query(model_output, case.gold.syndrome)
            rag_chunks = [c for c, _ in kb.retrieve(index, query, k)]
            for judge_backend in judges:
                tag = f"{run.case_id}/{rubric}_judge.{judge_backend.backend_id}"
                if rubric == "reason":
                    label = gold_label_block(case)
                    if not label:
                        records.append(
                            JudgeRunRecord(
                                judge_id=judge_backend.backend_id, case_id=run.case_id,
                                model_label=run.model_label, raw_text="",
                                error="case has no gold label", error_kind="MissingLabel",
                            )
                        )
                        continue
                    request = build_reason_prompt(
                        case_text_block(case), rag_chunks, label, model_output, tag=tag
                    )
                else:
                    images = [pipeline._image_part(img) for img in case.images]
                    request = build_rep_prompt(
                        images, rag_chunks, model_output,
                        label=gold_label_block(case) if rep_with_label else None, tag=tag,
                    )
                verdict, raw, repaired, error, error_kind = invoke_judge(
                    judge_backend, request, rubric
                )
                flags: tuple[str, ...] = ()
                if verdict is not None and rubric == "reason" and case.gold.prescription:
                    verdict, flags = reconcile_reason(
                        verdict, run.output.prescription_text, case.gold.prescription,
                        alias_table, pair_table,
                    )
                records.append(
                    JudgeRunRecord(
                        judge_id=judge_backend.backend_id, case_id=run.case_id,
                        model_label=run.model_label, raw_text=raw, verdict=verdict,
                        error=error, error_kind=error_kind, repaired=repaired, flags=flags,
                    )
                )

    out_dir = config.out / "judge"
    out_dir.mkdir(parents=True, exist_ok=True)
    archive = out_dir / f"{rubric}_records.jsonl"
    with archive.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(
                json.dumps(
                    {
                        "judge_id": record.judge_id,
                        "case_id": record.case_id,
                        "model_label": record.model_label,
                        "raw_text": record.raw_text,
                        "verdict": record.verdict.to_dict() if record.verdict else None,
                        "error": record.error,
                        "error_kind": record.error_kind,
                        "repaired": record.repaired,
                        "flags": list(record.flags),
                    },
                    ensure_ascii=False, sort_keys=True,
                )
                + "\n"
            )

    failures = sum(1 for r in records if r.verdict is None)
    try:
        report = aggregate(records)
    except ValueError as exc:
        _fatal(str(exc))
    (out_dir / f"{rubric}_report.md").write_text(report.to_markdown(), encoding="utf-8")
    (out_dir / f"{rubric}_report.csv").write_text(report.to_csv(), encoding="utf-8")
    for label, agg in sorted(report.models.items()):
        click.echo(f"{label}: cross-judge mean {agg.cross_judge_mean_display} "
                   f"({agg.parsed} verdicts, {agg.parse_errors} errors)")
    click.echo(f"archive and report written to {out_dir}")
    if records and failures * 2 > len(records):
        click.echo("error: more than half of all judge calls failed to parse", err=True)
        sys.exit(EXIT_PARTIAL)


@main.group("kb")
def kb_group() -> None:
    """Knowledge-base maintenance."""


@kb_group.command("index")
@click.option("--index-file", default=None, help="Where to write the index (default: <out>/kb_index.json).")
@pass_config
def kb_index_cmd(config: RunConfig, index_file: str | None) -> None:
    """Index the reference corpus for retrieval."""
    try:
        config.validate_paths(need_kb=True)
    except ConfigError as exc:
        _fatal(str(exc))
    index = kb.index_corpus(config.kb)
    path = Path(index_file) if index_file else config.out / "kb_index.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    kb.save_index(index, path)
    click.echo(f"indexed {len(index.chunks)} chunks -> {path}")


@kb_group.command("query")
@click.argument("query")
@click.option("--index-file", default=None, help="Index file (default: <out>/kb_index.json).")
@click.option("-k", "top_k", default=5, show_default=True, help="Number of chunks to return.")
@pass_config
def kb_query_cmd(config: RunConfig, query: str, index_file: str | None, top_k: int) -> None:
    """Query the index and print the ranked chunks."""
    path = Path(index_file) if index_file else config.out / "kb_index.json"
    try:
        index = kb.load_index(path)
    except kb.IndexError_ as exc:
        _fatal(str(exc))
    for chunk, score in kb.retrieve(index, query, top_k):
        heading = " > ".join(chunk.heading_path)
        click.echo(f"{score:8.4f}  {chunk.chunk_id}  [{heading}]")


@main.group("study")
def study_group() -> None:
    """Blinded human-evaluation study administration."""


def _store(config: RunConfig) -> StudyStore:
    return StudyStore(config.out / "studies")


@study_group.command("create")
@click.option("--study-id", default=None, help="Explicit study id (default: random).")
@click.option("--models-file", required=True, help="JSON file: [{model_id, outputs}].")
@click.option("--cases-file", required=True, help="JSON file: [{case_id, history, ...}].")
@click.option("--evaluators-file", required=True, help="JSON file: [{evaluator_id, token}].")
@pass_config
def study_create_cmd(config: RunConfig, study_id: str | None, models_file: str,
                     cases_file: str, evaluators_file: str) -> None:
    """Create a study with a seeded blind mapping."""
    models = json.loads(Path(models_file).read_text(encoding="utf-8"))
    cases = json.loads(Path(cases_file).read_text(encoding="utf-8"))
    evaluators = json.loads(Path(evaluators_file).read_text(encoding="utf-8"))
    try:
        study = _store(config).create(
            models=[m["model_id"] for m in models],
            cases={c["case_id"]: c for c in cases},
            evaluators={e["evaluator_id"]: e["token"] for e in evaluators},
            seed=config.seed,
            outputs={m["model_id"]: m.get("outputs", {}) for m in models},
            study_id=study_id,
        )
    except StudyError as exc:
        _fatal(str(exc))
    mapping_path = config.out / "studies" / study.study_id / "mapping.json"
    mapping_path.write_text(
        json.dumps(study.mapping.assignment, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    click.echo(f"study {study.study_id} created with letters {', '.join(study.letters)}")


@study_group.command("close")
@click.argument("study_id")
@pass_config
def study_close_cmd(config: RunConfig, study_id: str) -> None:
    """Close a study to further submissions."""
    try:
        _store(config).close(study_id)
    except StudyError as exc:
        _fatal(str(exc))
    click.echo(f"study {study_id} closed")


@study_group.command("reveal")
@click.argument("study_id")
@pass_config
def study_reveal_cmd(config: RunConfig, study_id: str) -> None:
    """Reveal the model-letter mapping of a closed study."""
    try:
        mapping = _store(config).reveal(study_id)
    except StudyError as exc:
        _fatal(str(exc))
    for model_id, letter in sorted(mapping.assignment.items(), key=lambda kv: kv[1]):
        click.echo(f"{letter}: {model_id}")


@study_group.command("report")
@click.argument("study_id")
@pass_config
def study_report_cmd(config: RunConfig, study_id: str) -> None:
    """Write per-dimension mean/variance tables for a study."""
    try:
        report = _store(config).report(study_id)
    except StudyError as exc:
        _fatal(str(exc))
    out_dir = config.out / "studies" / study_id
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    keys = sorted(report.models)
    lines = [f"note: {report.variance_convention}", ""]
    lines.append("| Dimension | " + " | ".join(keys) + " |")
    lines.append("|" + "---|" * (len(keys) + 1))
    from .humaneval import DIMENSIONS

    for dim in DIMENSIONS:
        cells = [
            f"{trunc4(float(report.models[k].dimension_means[dim]))} "
            f"({trunc4(float(report.models[k].dimension_variances[dim]))})"
            for k in keys
        ]
        lines.append(f"| {dim} | " + " | ".join(cells) + " |")
    total_cells = [
        f"{trunc4(float(report.models[k].total_mean))} "
        f"({trunc4(float(report.models[k].total_variance))})"
        for k in keys
    ]
    lines.append("| total | " + " | ".join(total_cells) + " |")
    (out_dir / "report.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo("\n".join(lines))


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True, help="Bind address.")
@click.option("--port", default=8080, show_default=True, help="Bind port.")
@click.option("--admin-token", required=True, help="Static admin token for study administration.")
@pass_config
def serve_cmd(config: RunConfig, host: str, port: int, admin_token: str) -> None:
    """Serve the human-evaluation HTTP API."""
    import uvicorn

    from .humaneval.service import create_app

    app = create_app(_store(config), admin_token)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
