"""Training-pair scoring, median-split cleaning, and chat-format SFT export.

The cleaning step keeps the top half of pairs by similarity. Selection is
rank-based rather than a value threshold: with ties at the boundary a
value cut cannot guarantee an exact half split, so pairs are ordered by
(similarity descending, original index ascending) and the top ceil(n/2)
are kept. The realized boundary scores are reported for audit.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .corpus import TrainingPair
from .similarity import TokenEncoder, token_similarity


class DataSplit(str, Enum):
    FULL = "FULL"
    CLEAN = "CLEAN"


@dataclass(frozen=True)
class FilterSummary:
    total: int
    kept: int
    median: float
    min_kept: float
    max_dropped: float | None  # None when nothing was dropped
    split_name: DataSplit


@dataclass(frozen=True)
class HistogramBin:
    start: float
    end: float
    count: int


def score_pairs(pairs: list[TrainingPair], encoder: TokenEncoder) -> list[TrainingPair]:
    """Set each pair's similarity to TOKEN_F1(neutral, gendered), order preserved."""
    scored = []
    for pair in pairs:
        try:
            score = token_similarity(
                pair.neutral,
                pair.gendered,
                encoder,
                candidate_id=f"{pair.id}#neutral",
                reference_id=f"{pair.id}#gendered",
            )
        except Exception as exc:
            raise RuntimeError(f"scoring failed for pair {pair.id!r}: {exc}") from exc
        scored.append(pair.with_similarity(score.value))
    return scored


def median_filter(pairs: list[TrainingPair]) -> tuple[list[TrainingPair], FilterSummary]:
    """Keep the top ceil(n/2) pairs by similarity, stable at ties.

    Boundary ties are broken by original index (earliest kept), which
    makes the kept count reproducible regardless of sort implementation.
    Kept pairs are returned in their original relative order.
    """
    if not pairs:
        raise ValueError("cannot filter an empty pair list")
    for pair in pairs:
        if pair.similarity is None:
            raise ValueError(f"pair {pair.id!r} has no similarity score")
    n = len(pairs)
    keep_count = math.ceil(n / 2)
    ranked = sorted(range(n), key=lambda i: (-pairs[i].similarity, i))
    kept_indices = sorted(ranked[:keep_count])
    dropped_indices = ranked[keep_count:]
    kept = [pairs[i] for i in kept_indices]
    summary = FilterSummary(
        total=n,
        kept=keep_count,
        median=float(statistics.median(p.similarity for p in pairs)),
        min_kept=min(pairs[i].similarity for i in kept_indices),
        max_dropped=max(pairs[i].similarity for i in dropped_indices) if dropped_indices else None,
        split_name=DataSplit.CLEAN,
    )
    return kept, summary


def export_chat_sft(pairs: list[TrainingPair], path: str | Path) -> int:
    """Write one chat record per pair (user: gendered, assistant: neutral)."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            record = {
                "messages": [
                    {"role": "user", "content": pair.gendered},
                    {"role": "assistant", "content": pair.neutral},
                ]
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            count += 1
    return count


def read_chat_sft(path: str | Path) -> list[tuple[str, str]]:
    """Parse an SFT export back into (gendered, neutral) content pairs."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            record = json.loads(raw)
            messages = record.get("messages")
            if (
                not isinstance(messages, list)
                or len(messages) != 2
                or messages[0].get("role") != "user"
                or messages[1].get("role") != "assistant"
            ):
                raise ValueError(f"{path}:{lineno}: not a user/assistant chat record")
            out.append((messages[0]["content"], messages[1]["content"]))
    return out


def split_stats(
    pairs: list[TrainingPair], bin_width: float = 0.02
) -> tuple[float, list[HistogramBin]]:
    """Mean similarity plus fixed-width histogram bins for plotting.

    Bins are anchored at integer multiples of bin_width and cover
    [min score, max score]; the top edge is inclusive so a constant
    score list occupies exactly one bin.
    """
    if not pairs:
        raise ValueError("cannot summarize an empty pair list")
    scores = []
    for pair in pairs:
        if pair.similarity is None:
            raise ValueError(f"pair {pair.id!r} has no similarity score")
        scores.append(pair.similarity)
    mean = math.fsum(scores) / len(scores)
    lo_bin = math.floor(min(scores) / bin_width)
    hi_bin = math.floor(max(scores) / bin_width)
    counts = [0] * (hi_bin - lo_bin + 1)
    for s in scores:
        idx = min(math.floor(s / bin_width), hi_bin) - lo_bin
        counts[idx] += 1
    bins = [
        HistogramBin(start=(lo_bin + i) * bin_width, end=(lo_bin + i + 1) * bin_width, count=c)
        for i, c in enumerate(counts)
    ]
    return mean, bins


def write_histogram_csv(bins: list[HistogramBin], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("bin_start,bin_end,count\n")
        for b in bins:
            fh.write(f"{b.start:.6f},{b.end:.6f},{b.count}\n")
