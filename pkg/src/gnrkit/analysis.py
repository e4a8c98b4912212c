"""Two-axis aggregation, metric correlation, and gaming diagnostics.

Per-sentence evaluation records are aggregated into one report per
backend: a (neutrality %, mean token F1) cell per prompt condition,
arithmetic means of the cells, and per-axis (min, max) ranges. Pearson
is computed on raw values, Spearman as Pearson on average-tie fractional
ranks; two-sided p-values use the Student-t approximation. A gaming
signature is a high linear correlation paired with a degraded rank
correlation between two similarity metrics.

Reported percentages use two decimals and similarity values four, both
rounded half-up; rows sort by backend id then condition.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.special import stdtr

from .judge import JudgeVerdict, VerdictLabel, neutrality_accuracy

DEFAULT_R_MIN = 0.85
DEFAULT_GAP_MIN = 0.15


class ReportFormat(str, Enum):
    CSV = "CSV"
    JSON = "JSON"
    PLOTDATA = "PLOTDATA"


@dataclass(frozen=True)
class EvalRecord:
    sentence_id: str
    backend_id: str
    condition: str
    output_text: str
    verdict: JudgeVerdict
    token_f1: float
    avg_logprob: float | None = None


@dataclass(frozen=True)
class ConditionCell:
    neutrality_pct: float
    mean_token_f1: float


@dataclass(frozen=True)
class RunReport:
    backend_id: str
    cells: dict[str, ConditionCell]
    avg_neutrality_pct: float
    avg_token_f1: float
    neutrality_range: tuple[float, float]
    token_f1_range: tuple[float, float]
    threshold_line: float | None = None


@dataclass(frozen=True)
class CorrelationReport:
    pearson_r: float
    spearman_rho: float
    n: int
    p_values: tuple[float, float]
    gaming_flag: bool
    r_min: float = DEFAULT_R_MIN
    gap_min: float = DEFAULT_GAP_MIN


def _round2(value: float) -> float:
    return float(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _round4(value: float) -> float:
    return float(Decimal(repr(value)).quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))


def _decimal_mean_2(values: list[float]) -> float:
    total = sum(Decimal(repr(v)) for v in values)
    return float((total / len(values)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _decimal_mean_4(values: list[float]) -> float:
    total = sum(Decimal(repr(v)) for v in values)
    return float((total / len(values)).quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))


def aggregate(records: list[EvalRecord], threshold_line: float | None = None) -> list[RunReport]:
    """One RunReport per backend, sorted by backend id."""
    if not records:
        raise ValueError("no records to aggregate")
    by_backend: dict[str, dict[str, list[EvalRecord]]] = {}
    for record in records:
        by_backend.setdefault(record.backend_id, {}).setdefault(record.condition, []).append(record)

    reports = []
    for backend_id in sorted(by_backend):
        cells = {}
        for condition in sorted(by_backend[backend_id]):
            group = by_backend[backend_id][condition]
            pct = neutrality_accuracy([r.verdict for r in group])
            mean_f1 = _round4(math.fsum(r.token_f1 for r in group) / len(group))
            cells[condition] = ConditionCell(pct, mean_f1)
        pct_values = [c.neutrality_pct for c in cells.values()]
        f1_values = [c.mean_token_f1 for c in cells.values()]
        reports.append(
            RunReport(
                backend_id=backend_id,
                cells=cells,
                avg_neutrality_pct=_decimal_mean_2(pct_values),
                avg_token_f1=_decimal_mean_4(f1_values),
                neutrality_range=(min(pct_values), max(pct_values)),
                token_f1_range=(min(f1_values), max(f1_values)),
                threshold_line=threshold_line,
            )
        )
    return reports


def _fractional_ranks(values: np.ndarray) -> np.ndarray:
    """Average ranks (1-based); ties share the mean of their rank block."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("correlation undefined for constant input")
    return float((dx @ dy) / math.sqrt(sxx * syy))


def _two_sided_p(r: float, n: int) -> float:
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * stdtr(n - 2, -abs(t)))


def correlate(
    xs: list[float],
    ys: list[float],
    r_min: float = DEFAULT_R_MIN,
    gap_min: float = DEFAULT_GAP_MIN,
) -> CorrelationReport:
    """Pearson and Spearman coefficients with two-sided p-values."""
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 3:
        raise ValueError("need at least 3 points")
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    r = _pearson(x, y)
    rho = _pearson(_fractional_ranks(x), _fractional_ranks(y))
    return CorrelationReport(
        pearson_r=r,
        spearman_rho=rho,
        n=len(xs),
        p_values=(_two_sided_p(r, len(xs)), _two_sided_p(rho, len(xs))),
        gaming_flag=_gaming(r, rho, r_min, gap_min),
        r_min=r_min,
        gap_min=gap_min,
    )


def _gaming(r: float, rho: float, r_min: float, gap_min: float) -> bool:
    return r >= r_min and (r - rho) >= gap_min


def detect_metric_gaming(
    report: CorrelationReport,
    r_min: float = DEFAULT_R_MIN,
    gap_min: float = DEFAULT_GAP_MIN,
) -> bool:
    """High linear agreement with degraded rank agreement flags gaming."""
    return _gaming(report.pearson_r, report.spearman_rho, r_min, gap_min)


def write_records(records: list[EvalRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {
                "sentence_id": r.sentence_id,
                "backend_id": r.backend_id,
                "condition": r.condition,
                "output_text": r.output_text,
                "verdict": {
                    "label": r.verdict.label.value,
                    "raw_response": r.verdict.raw_response,
                    "attempts": r.verdict.attempts,
                },
                "token_f1": r.token_f1,
                "avg_logprob": r.avg_logprob,
            }
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def read_records(path: str | Path) -> list[EvalRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            if not raw.strip():
                continue
            obj = json.loads(raw)
            verdict = JudgeVerdict(
                sentence_id=obj["sentence_id"],
                label=VerdictLabel(obj["verdict"]["label"]),
                raw_response=obj["verdict"]["raw_response"],
                attempts=obj["verdict"]["attempts"],
            )
            records.append(
                EvalRecord(
                    sentence_id=obj["sentence_id"],
                    backend_id=obj["backend_id"],
                    condition=obj["condition"],
                    output_text=obj["output_text"],
                    verdict=verdict,
                    token_f1=obj["token_f1"],
                    avg_logprob=obj.get("avg_logprob"),
                )
            )
    return records


def run_report_to_dict(report: RunReport) -> dict:
    return {
        "backend_id": report.backend_id,
        "cells": {
            cond: {"neutrality_pct": cell.neutrality_pct, "mean_token_f1": cell.mean_token_f1}
            for cond, cell in report.cells.items()
        },
        "avg_neutrality_pct": report.avg_neutrality_pct,
        "avg_token_f1": report.avg_token_f1,
        "neutrality_range": list(report.neutrality_range),
        "token_f1_range": list(report.token_f1_range),
        "threshold_line": report.threshold_line,
    }


def correlation_report_to_dict(report: CorrelationReport) -> dict:
    return {
        "pearson_r": report.pearson_r,
        "spearman_rho": report.spearman_rho,
        "n": report.n,
        "p_value_pearson": report.p_values[0],
        "p_value_spearman": report.p_values[1],
        "r_min": report.r_min,
        "gap_min": report.gap_min,
        "gaming_flag": report.gaming_flag,
    }


def emit_report(
    report: RunReport | list[RunReport] | CorrelationReport,
    format: ReportFormat,
    path: str | Path,
) -> Path:
    """Serialize a report deterministically in the requested format.

    PLOTDATA applies to run reports only: one point per backend with
    per-axis range extents and the threshold line.
    """
    path = Path(path)
    if isinstance(report, CorrelationReport):
        if format is ReportFormat.CSV:
            fields = correlation_report_to_dict(report)
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(",".join(fields) + "\n")
                fh.write(",".join(str(v) for v in fields.values()) + "\n")
        elif format is ReportFormat.JSON:
            path.write_text(
                json.dumps(correlation_report_to_dict(report), sort_keys=True, indent=2) + "\n",
                encoding="utf-8",
            )
        else:
            raise ValueError("PLOTDATA is only defined for run reports")
        return path

    reports = report if isinstance(report, list) else [report]
    reports = sorted(reports, key=lambda r: r.backend_id)
    if format is ReportFormat.CSV:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("backend_id,condition,neutrality_pct,mean_token_f1\n")
            for rep in reports:
                for cond in sorted(rep.cells):
                    cell = rep.cells[cond]
                    fh.write(
                        f"{rep.backend_id},{cond},{cell.neutrality_pct:.2f},{cell.mean_token_f1:.4f}\n"
                    )
                fh.write(f"{rep.backend_id},AVG,{rep.avg_neutrality_pct:.2f},{rep.avg_token_f1:.4f}\n")
    elif format is ReportFormat.JSON:
        payload = [run_report_to_dict(rep) for rep in reports]
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    elif format is ReportFormat.PLOTDATA:
        with open(path, "w", encoding="utf-8") as fh:
            for rep in reports:
                point = {
                    "backend_id": rep.backend_id,
                    "x": rep.avg_neutrality_pct,
                    "y": rep.avg_token_f1,
                    "x_min": rep.neutrality_range[0],
                    "x_max": rep.neutrality_range[1],
                    "y_min": rep.token_f1_range[0],
                    "y_max": rep.token_f1_range[1],
                    "threshold": rep.threshold_line,
                }
                fh.write(json.dumps(point, sort_keys=True) + "\n")
    else:
        raise ValueError(f"unknown report format: {format!r}")
    return path


def read_plotdata(path: str | Path) -> list[dict]:
    points = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            if raw.strip():
                points.append(json.loads(raw))
    return points
