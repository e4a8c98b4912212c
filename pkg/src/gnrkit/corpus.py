"""Loading and validation of benchmark corpora and training-pair files.

Both file formats are UTF-8 JSON lines. A corpus record is
``{"id", "subset", "ref_gendered", "ref_neutral"}`` with an optional
``"notes"``; a training-pair record is ``{"id", "gendered", "neutral"}``
with an optional ``"similarity"``. Validation is strict: the first bad
record aborts the load with its line number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path


class Subset(str, Enum):
    SET_G = "SET_G"
    SET_N = "SET_N"


class CorpusFormatError(ValueError):
    """A record failed validation; carries the 1-based line number."""

    def __init__(self, path: str | Path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line
        self.reason = message


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    subset: Subset
    ref_gendered: str
    ref_neutral: str
    notes: str | None = None


@dataclass(frozen=True)
class TrainingPair:
    id: str
    gendered: str
    neutral: str
    similarity: float | None = None

    def with_similarity(self, value: float) -> "TrainingPair":
        return replace(self, similarity=value)


def _iter_json_lines(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(path, lineno, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise CorpusFormatError(path, lineno, "record is not a JSON object")
            yield lineno, obj


def _require_text(obj: dict, key: str, path: str | Path, lineno: int) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise CorpusFormatError(path, lineno, f"missing or non-string field {key!r}")
    if not value:
        raise CorpusFormatError(path, lineno, f"empty text field {key!r}")
    return value


def load_corpus(path: str | Path) -> list[CorpusEntry]:
    """Load and validate a benchmark corpus, preserving file order."""
    entries: list[CorpusEntry] = []
    seen: dict[str, int] = {}
    for lineno, obj in _iter_json_lines(path):
        entry_id = _require_text(obj, "id", path, lineno)
        if entry_id in seen:
            raise CorpusFormatError(
                path, lineno, f"duplicate id {entry_id!r} (first seen on line {seen[entry_id]})"
            )
        seen[entry_id] = lineno
        raw_subset = obj.get("subset")
        try:
            subset = Subset(raw_subset)
        except ValueError:
            raise CorpusFormatError(
                path, lineno, f"subset must be one of {[s.value for s in Subset]}, got {raw_subset!r}"
            ) from None
        gendered = _require_text(obj, "ref_gendered", path, lineno)
        neutral = _require_text(obj, "ref_neutral", path, lineno)
        if gendered == neutral:
            raise CorpusFormatError(path, lineno, "ref_gendered and ref_neutral are identical")
        notes = obj.get("notes")
        if notes is not None and not isinstance(notes, str):
            raise CorpusFormatError(path, lineno, "notes must be a string when present")
        entries.append(CorpusEntry(entry_id, subset, gendered, neutral, notes))
    return entries


def write_corpus(entries: list[CorpusEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            record = {
                "id": e.id,
                "subset": e.subset.value,
                "ref_gendered": e.ref_gendered,
                "ref_neutral": e.ref_neutral,
            }
            if e.notes is not None:
                record["notes"] = e.notes
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def select_gnr_inputs(corpus: list[CorpusEntry]) -> list[CorpusEntry]:
    """Entries whose gendered references serve as rewriting inputs (Set-N), in order."""
    return [e for e in corpus if e.subset is Subset.SET_N]


def load_training_pairs(path: str | Path) -> list[TrainingPair]:
    """Load and validate a training-pair file, preserving file order."""
    pairs: list[TrainingPair] = []
    seen: dict[str, int] = {}
    for lineno, obj in _iter_json_lines(path):
        pair_id = _require_text(obj, "id", path, lineno)
        if pair_id in seen:
            raise CorpusFormatError(
                path, lineno, f"duplicate id {pair_id!r} (first seen on line {seen[pair_id]})"
            )
        seen[pair_id] = lineno
        gendered = _require_text(obj, "gendered", path, lineno)
        neutral = _require_text(obj, "neutral", path, lineno)
        similarity = obj.get("similarity")
        if similarity is not None:
            if not isinstance(similarity, (int, float)) or isinstance(similarity, bool):
                raise CorpusFormatError(path, lineno, "similarity must be a number when present")
            if not -1.0 <= float(similarity) <= 1.0:
                raise CorpusFormatError(path, lineno, f"similarity {similarity} outside [-1, 1]")
            similarity = float(similarity)
        pairs.append(TrainingPair(pair_id, gendered, neutral, similarity))
    return pairs


def write_training_pairs(pairs: list[TrainingPair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            record: dict = {"id": p.id, "gendered": p.gendered, "neutral": p.neutral}
            if p.similarity is not None:
                record["similarity"] = p.similarity
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
