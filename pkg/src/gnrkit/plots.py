"""Figure rendering for the CLI report path.

The library emits plot data as records; these helpers turn that data
into PNG files next to the delimited output. Rendering is deterministic
given identical inputs.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .analysis import RunReport


def render_two_axis(reports: list[RunReport], path: str | Path) -> Path:
    """Scatter of (neutrality %, mean token F1) per backend with range bars."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 5))
    reports = sorted(reports, key=lambda r: r.backend_id)
    for report in reports:
        x = report.avg_neutrality_pct
        y = report.avg_token_f1
        xerr = [[x - report.neutrality_range[0]], [report.neutrality_range[1] - x]]
        yerr = [[y - report.token_f1_range[0]], [report.token_f1_range[1] - y]]
        ax.errorbar(
            [x], [y], xerr=xerr, yerr=yerr,
            marker="D", markersize=7, capsize=3, linestyle="none", label=report.backend_id,
        )
    thresholds = {r.threshold_line for r in reports if r.threshold_line is not None}
    for threshold in sorted(thresholds):
        ax.axhline(threshold, linestyle="--", color="gray", linewidth=1)
    ax.set_xlabel("Neutralization accuracy (%)")
    ax.set_ylabel("Mean token-level similarity (F1)")
    ax.set_title("Neutrality vs. meaning preservation")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_histogram(histogram_csv: str | Path, path: str | Path) -> Path:
    """Bar chart of similarity-score bins from a (bin_start, bin_end, count) CSV."""
    path = Path(path)
    starts, widths, counts = [], [], []
    with open(histogram_csv, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            start = float(row["bin_start"])
            starts.append(start)
            widths.append(float(row["bin_end"]) - start)
            counts.append(int(row["count"]))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(starts, counts, width=widths, align="edge", edgecolor="white", linewidth=0.3)
    ax.set_xlabel("Pair similarity (token F1)")
    ax.set_ylabel("Pairs")
    ax.set_title("Training-pair similarity distribution")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
