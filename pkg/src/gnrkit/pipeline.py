"""End-to-end command implementations behind the CLI.

Each function realizes one subcommand over a validated RunConfig and
writes deterministic artifacts into the output directory. Timestamps and
other volatile facts go only into ``run_meta.json``, so rerunning a
command with identical config and warm caches reproduces every other
output byte for byte.
"""

from __future__ import annotations

import datetime
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .analysis import (
    CorrelationReport,
    EvalRecord,
    ReportFormat,
    aggregate,
    correlate,
    emit_report,
    read_records,
    write_records,
)
from .config import (
    RunConfig,
    build_encoder,
    build_gateway,
    build_judge,
    build_likelihood_scorer,
    validate_for_evaluate,
    validate_for_scoring,
)
from .corpus import (
    CorpusEntry,
    Subset,
    load_corpus,
    load_training_pairs,
    select_gnr_inputs,
    write_training_pairs,
)
from .curation import export_chat_sft, median_filter, score_pairs, split_stats, write_histogram_csv
from .gateway import GenerationRequest
from .judge import JudgeError, JudgeVerdict, default_judge_prompt_path, neutrality_accuracy
from .prompting import PromptCondition, build_messages, default_shots_path, load_shots, parse_condition_id
from .similarity import (
    LIKELIHOOD_DIRECTION,
    Metric,
    SimilarityScore,
    derive_threshold,
    likelihood_score,
    score_reference_pairs,
    token_similarity,
    write_score_dump,
)

logger = logging.getLogger(__name__)


@dataclass
class EvaluateStats:
    records_written: int
    errors_written: int
    backend_calls: int
    records_path: Path
    errors_path: Path
    report_csv: Path
    report_json: Path


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run_meta(config: RunConfig, out: Path, extra: dict) -> None:
    meta = {
        "toolkit_version": __version__,
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "seed": config.seed,
        "encoder": build_encoder(config.encoder).metadata(),
        "likelihood_direction": LIKELIHOOD_DIRECTION,
    }
    meta.update(extra)
    (out / "run_meta.json").write_text(
        json.dumps(meta, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _load_conditions(config: RunConfig) -> list[PromptCondition]:
    return [PromptCondition.load(*parse_condition_id(c)) for c in config.conditions]


def _load_shot_list(config: RunConfig):
    path = config.shots_path or default_shots_path()
    return load_shots(path)


def _active_threshold(out: Path) -> float | None:
    path = out / "threshold.json"
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))["threshold"]


def run_evaluate(config: RunConfig) -> EvaluateStats:
    """Generate, judge, and score every backend x condition x input sentence."""
    validate_for_evaluate(config)
    out = _out_dir(config)
    corpus = load_corpus(config.corpus_path)
    inputs = select_gnr_inputs(corpus)
    shots = _load_shot_list(config)
    conditions = _load_conditions(config)
    gateway = build_gateway(config)
    judge = build_judge(config, gateway)
    encoder = build_encoder(config.encoder)
    scorer = build_likelihood_scorer(config.likelihood)

    records: list[EvalRecord] = []
    errors: list[dict] = []

    for backend in config.backends:
        for condition in conditions:
            requests = [
                GenerationRequest(
                    messages=tuple(build_messages(condition, shots, entry.ref_gendered)),
                    backend_id=backend.id,
                    max_new_tokens=config.generation.max_new_tokens,
                    temperature=config.generation.temperature,
                    seed=config.generation.seed,
                    request_id=f"{backend.id}|{condition.condition_id}|{entry.id}",
                )
                for entry in inputs
            ]
            results = gateway.generate_batch(requests, config.max_in_flight)

            def process(entry_result: tuple[CorpusEntry, object]):
                entry, result = entry_result
                base = {
                    "sentence_id": entry.id,
                    "backend_id": backend.id,
                    "condition": condition.condition_id,
                }
                if result.error is not None:
                    return None, {**base, "stage": "generate", "error": result.error}
                try:
                    verdict = judge.judge_sentence(result.text, sentence_id=entry.id)
                except JudgeError as exc:
                    return None, {**base, "stage": "judge", "error": str(exc)}
                try:
                    f1 = token_similarity(result.text, entry.ref_gendered, encoder).value
                except Exception as exc:
                    return None, {**base, "stage": "score", "error": str(exc)}
                avg_logprob = None
                if scorer is not None:
                    try:
                        avg_logprob = likelihood_score(entry.ref_gendered, result.text, scorer).value
                    except Exception as exc:
                        return None, {**base, "stage": "score", "error": str(exc)}
                record = EvalRecord(
                    sentence_id=entry.id,
                    backend_id=backend.id,
                    condition=condition.condition_id,
                    output_text=result.text,
                    verdict=verdict,
                    token_f1=f1,
                    avg_logprob=avg_logprob,
                )
                return record, None

            with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
                outcomes = list(pool.map(process, zip(inputs, results)))
            for record, error in outcomes:
                if record is not None:
                    records.append(record)
                else:
                    errors.append(error)
            logger.info(
                "evaluated %s under %s: %d ok, %d errors",
                backend.id,
                condition.condition_id,
                sum(1 for r, _ in outcomes if r is not None),
                sum(1 for _, e in outcomes if e is not None),
            )

    records_path = out / "records.jsonl"
    write_records(records, records_path)
    errors_path = out / "errors.jsonl"
    with open(errors_path, "w", encoding="utf-8") as fh:
        for error in errors:
            fh.write(json.dumps(error, ensure_ascii=False, sort_keys=True) + "\n")

    report_csv = out / "report.csv"
    report_json = out / "reports.json"
    if records:
        reports = aggregate(records, threshold_line=_active_threshold(out))
        emit_report(reports, ReportFormat.CSV, report_csv)
        emit_report(reports, ReportFormat.JSON, report_json)

    _write_run_meta(
        config,
        out,
        {
            "command": "evaluate",
            "judge_prompt_sha256": judge.prompt_sha256,
            "judge_prompt_path": str(config.judge.prompt_path or default_judge_prompt_path()),
            "judge_model": judge.backend.model_name,
            "shots_path": str(config.shots_path or default_shots_path()),
            "backend_calls": gateway.dispatch_count,
            "records": len(records),
            "errors": len(errors),
        },
    )
    return EvaluateStats(
        records_written=len(records),
        errors_written=len(errors),
        backend_calls=gateway.dispatch_count,
        records_path=records_path,
        errors_path=errors_path,
        report_csv=report_csv,
        report_json=report_json,
    )


def run_derive_threshold(config: RunConfig) -> Path:
    """Score neutral-vs-gendered reference pairs and emit the threshold record."""
    validate_for_scoring(config)
    out = _out_dir(config)
    corpus = load_corpus(config.corpus_path)
    encoder = build_encoder(config.encoder)
    entries = [e for e in corpus if e.subset is Subset.SET_N]
    scores = score_reference_pairs(corpus, Subset.SET_N, encoder)
    dump = [
        SimilarityScore(value, Metric.TOKEN_F1, f"{e.id}#neutral", f"{e.id}#gendered")
        for e, value in zip(entries, scores)
    ]
    write_score_dump(dump, out / "ref_scores.jsonl")
    report = derive_threshold(scores)
    payload = {
        "mean": report.mean,
        "std": report.std,
        "threshold": report.threshold,
        "n": report.n,
        "metric": Metric.TOKEN_F1.value,
        "encoder": encoder.metadata(),
    }
    path = out / "threshold.json"
    path.write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    _write_run_meta(config, out, {"command": "derive-threshold", "n": report.n})
    return path


def run_filter_data(config: RunConfig, pairs_path: str | Path) -> dict:
    """Score (if needed), median-filter, and export the clean SFT split."""
    out = _out_dir(config)
    pairs = load_training_pairs(pairs_path)
    if not pairs:
        raise ValueError(f"no training pairs in {pairs_path}")
    unscored = [p for p in pairs if p.similarity is None]
    if unscored:
        encoder = build_encoder(config.encoder)
        logger.info("scoring %d/%d unscored pairs", len(unscored), len(pairs))
        fresh = iter(score_pairs(unscored, encoder))
        pairs = [p if p.similarity is not None else next(fresh) for p in pairs]
    write_training_pairs(pairs, out / "scored_pairs.jsonl")

    kept, summary = median_filter(pairs)
    mean_full, bins = split_stats(pairs)
    mean_kept, _ = split_stats(kept)
    export_chat_sft(kept, out / "clean.sft.jsonl")
    write_histogram_csv(bins, out / "histogram_full.csv")
    summary_payload = {
        "split_name": summary.split_name.value,
        "total": summary.total,
        "kept": summary.kept,
        "median": summary.median,
        "min_kept": summary.min_kept,
        "max_dropped": summary.max_dropped,
        "mean_full": mean_full,
        "mean_kept": mean_kept,
    }
    (out / "filter_summary.json").write_text(
        json.dumps(summary_payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    _write_run_meta(config, out, {"command": "filter-data", "total": summary.total, "kept": summary.kept})
    return summary_payload


def run_judge_file(config: RunConfig, in_path: str | Path, out_path: str | Path) -> float:
    """Judge ``{"id", "text"}`` records and write verdicts plus the accuracy."""
    gateway = build_gateway(config)
    judge = build_judge(config, gateway)
    sentences: list[tuple[str, str]] = []
    with open(in_path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            obj = json.loads(raw)
            if "id" not in obj or "text" not in obj:
                raise ValueError(f"{in_path}:{lineno}: record needs 'id' and 'text'")
            sentences.append((obj["id"], obj["text"]))

    def one(item: tuple[str, str]) -> JudgeVerdict:
        sentence_id, text = item
        return judge.judge_sentence(text, sentence_id=sentence_id)

    with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
        verdicts = list(pool.map(one, sentences))
    with open(out_path, "w", encoding="utf-8") as fh:
        for v in verdicts:
            fh.write(
                json.dumps(
                    {
                        "sentence_id": v.sentence_id,
                        "label": v.label.value,
                        "raw_response": v.raw_response,
                        "attempts": v.attempts,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )
    return neutrality_accuracy(verdicts)


def run_score_file(config: RunConfig, in_path: str | Path, out_path: str | Path) -> int:
    """Score a training-pair file (neutral vs gendered) into a score dump."""
    encoder = build_encoder(config.encoder)
    pairs = load_training_pairs(in_path)
    scores = [
        token_similarity(
            p.neutral, p.gendered, encoder,
            candidate_id=f"{p.id}#neutral", reference_id=f"{p.id}#gendered",
        )
        for p in pairs
    ]
    write_score_dump(scores, out_path)
    return len(scores)


def run_correlate(
    records_path: str | Path,
    out_dir: str | Path,
    r_min: float,
    gap_min: float,
    backend_id: str | None = None,
) -> CorrelationReport:
    """Correlate token F1 against average log-probability over a record dump."""
    records = read_records(records_path)
    if backend_id is not None:
        records = [r for r in records if r.backend_id == backend_id]
    missing = [r for r in records if r.avg_logprob is None]
    if missing:
        raise ValueError(
            f"{len(missing)} records lack avg_logprob; rerun evaluate with a likelihood scorer"
        )
    xs = [r.token_f1 for r in records]
    ys = [r.avg_logprob for r in records]
    report = correlate(xs, ys, r_min=r_min, gap_min=gap_min)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_report(report, ReportFormat.JSON, out / "correlation.json")
    emit_report(report, ReportFormat.CSV, out / "correlation.csv")
    return report


def run_report(
    records_path: str | Path,
    out_dir: str | Path,
    threshold_path: str | Path | None = None,
    histogram_path: str | Path | None = None,
) -> dict:
    """Emit CSV tables, plot data, and rendered figures from a record dump."""
    from .plots import render_histogram, render_two_axis

    records = read_records(records_path)
    if not records:
        raise ValueError(f"no records in {records_path}")
    threshold = None
    if threshold_path is not None and Path(threshold_path).exists():
        threshold = json.loads(Path(threshold_path).read_text(encoding="utf-8"))["threshold"]
    reports = aggregate(records, threshold_line=threshold)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = emit_report(reports, ReportFormat.CSV, out / "report.csv")
    json_path = emit_report(reports, ReportFormat.JSON, out / "reports.json")
    plotdata_path = emit_report(reports, ReportFormat.PLOTDATA, out / "plotdata.jsonl")

    figures_dir = out / "figures"
    figures_dir.mkdir(exist_ok=True)
    figure_paths = [render_two_axis(reports, figures_dir / "two_axis.png")]
    if histogram_path is not None and Path(histogram_path).exists():
        figure_paths.append(render_histogram(histogram_path, figures_dir / "score_histogram.png"))
    return {
        "report_csv": csv_path,
        "reports_json": json_path,
        "plotdata": plotdata_path,
        "figures": figure_paths,
    }
