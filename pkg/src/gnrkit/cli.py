"""Command-line interface orchestrating the rewriting pipeline."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .corpus import load_training_pairs
from .curation import DataSplit, export_chat_sft
from .finetune import ModelSizeClass, make_lora_plan, write_plan
from .pipeline import (
    run_correlate,
    run_derive_threshold,
    run_evaluate,
    run_filter_data,
    run_judge_file,
    run_report,
    run_score_file,
)

logger = logging.getLogger(__name__)


def _load_run_config(args, out_is_dir: bool = True) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "backend", None):
        wanted = set(args.backend)
        unknown = wanted - {b.id for b in config.backends}
        if unknown:
            raise ConfigError(f"backends not in config: {sorted(unknown)}")
        config.backends = [b for b in config.backends if b.id in wanted]
    if getattr(args, "condition", None):
        config.conditions = list(args.condition)
    if getattr(args, "shots", None):
        config.shots_path = args.shots
    if getattr(args, "max_in_flight", None):
        config.max_in_flight = args.max_in_flight
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if out_is_dir and getattr(args, "out", None):
        config.output_dir = args.out
    return config


def _cmd_evaluate(args) -> int:
    config = _load_run_config(args)
    stats = run_evaluate(config)
    print(f"records: {stats.records_written} -> {stats.records_path}")
    print(f"errors: {stats.errors_written} -> {stats.errors_path}")
    print(f"backend calls this run: {stats.backend_calls}")
    if stats.records_written:
        print(f"report: {stats.report_csv}")
    return 0


def _cmd_judge(args) -> int:
    config = _load_run_config(args, out_is_dir=False)
    out_path = Path(args.out or "verdicts.jsonl")
    accuracy = run_judge_file(config, args.infile, out_path)
    print(f"verdicts -> {out_path}")
    print(f"neutrality: {accuracy:.2f}%")
    return 0


def _cmd_score(args) -> int:
    config = _load_run_config(args, out_is_dir=False)
    out_path = Path(args.out or "scores.jsonl")
    count = run_score_file(config, args.infile, out_path)
    print(f"scored {count} pairs -> {out_path}")
    return 0


def _cmd_derive_threshold(args) -> int:
    config = _load_run_config(args)
    path = run_derive_threshold(config)
    payload = json.loads(path.read_text(encoding="utf-8"))
    print(
        f"threshold {payload['threshold']:.3f} "
        f"(mean {payload['mean']:.4f} - std {payload['std']:.4f}, n={payload['n']}) -> {path}"
    )
    return 0


def _cmd_filter_data(args) -> int:
    config = _load_run_config(args)
    summary = run_filter_data(config, args.pairs)
    print(
        f"kept {summary['kept']} of {summary['total']} pairs "
        f"(median {summary['median']:.4f}) -> {Path(config.output_dir) / 'clean.sft.jsonl'}"
    )
    return 0


def _cmd_export_sft(args) -> int:
    pairs = load_training_pairs(args.pairs)
    count = export_chat_sft(pairs, args.out)
    print(f"wrote {count} chat records -> {args.out}")
    return 0


def _cmd_make_plan(args) -> int:
    size_class = ModelSizeClass.B8 if args.size_class == "8b" else ModelSizeClass.B14
    split = DataSplit(args.split.upper())
    seed = args.seed if args.seed is not None else 0
    plan = make_lora_plan(size_class, split, args.sft, validation_seed=seed)
    write_plan(plan, args.out)
    print(f"plan ({size_class.value}, {split.value}) -> {args.out}")
    return 0


def _cmd_correlate(args) -> int:
    out_dir = args.out or "."
    report = run_correlate(args.records, out_dir, args.r_min, args.gap_min, args.backend)
    flag = "FLAGGED" if report.gaming_flag else "ok"
    print(
        f"pearson r={report.pearson_r:.3f} spearman rho={report.spearman_rho:.3f} "
        f"n={report.n} gaming: {flag}"
    )
    return 0


def _cmd_report(args) -> int:
    out_dir = args.out or "."
    produced = run_report(args.records, out_dir, args.threshold, args.histogram)
    print(f"tables: {produced['report_csv']}, {produced['reports_json']}")
    print(f"plot data: {produced['plotdata']}")
    for figure in produced["figures"]:
        print(f"figure: {figure}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnrkit",
        description="Gender-neutral rewriting toolkit for Italian: evaluate, curate, report.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="run configuration YAML")
        p.add_argument("--seed", type=int, default=None, help="override the top-level seed")
        p.add_argument("--out", default=None, help="override the output directory")

    p = sub.add_parser("evaluate", help="generate, judge, and score the benchmark inputs")
    common(p)
    p.add_argument("--backend", action="append", help="restrict to a configured backend id")
    p.add_argument("--condition", action="append", help="condition id such as gfg-ita")
    p.add_argument("--shots", default=None, help="override the shots file")
    p.add_argument("--max-in-flight", type=int, default=None, dest="max_in_flight")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("judge", help="judge sentences from a JSONL file of {id, text}")
    common(p)
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(func=_cmd_judge)

    p = sub.add_parser("score", help="score a training-pair file into a score dump")
    common(p)
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("derive-threshold", help="derive the human-level similarity threshold")
    common(p)
    p.set_defaults(func=_cmd_derive_threshold)

    p = sub.add_parser("filter-data", help="median-split training pairs and export the clean SFT")
    common(p)
    p.add_argument("--pairs", required=True, help="training-pair JSONL file")
    p.set_defaults(func=_cmd_filter_data)

    p = sub.add_parser("export-sft", help="export a training-pair file as chat-format SFT data")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_sft)

    p = sub.add_parser("make-plan", help="emit an adapter fine-tuning plan")
    p.add_argument("--size-class", choices=["8b", "14b"], required=True)
    p.add_argument("--split", choices=["full", "clean"], required=True)
    p.add_argument("--sft", required=True, help="chat-format SFT file the plan trains on")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_make_plan)

    p = sub.add_parser("correlate", help="correlate token F1 vs avg log-prob over a record dump")
    p.add_argument("--records", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--backend", default=None, help="restrict to one backend id")
    p.add_argument("--r-min", type=float, default=0.85, dest="r_min")
    p.add_argument("--gap-min", type=float, default=0.15, dest="gap_min")
    p.set_defaults(func=_cmd_correlate)

    p = sub.add_parser("report", help="emit tables, plot data, and figures from a record dump")
    p.add_argument("--records", required=True)
    p.add_argument("--threshold", default=None, help="threshold.json for the reference line")
    p.add_argument("--histogram", default=None, help="histogram CSV to render")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
