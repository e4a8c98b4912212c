"""Meaning-preservation scoring and the human-level threshold.

Two metrics are implemented. ``TOKEN_F1`` is a greedy token-matching
score over per-token embeddings: precision is the mean over candidate
tokens of the maximum cosine against reference tokens, recall is the
symmetric quantity, and the value is their harmonic mean, with no
baseline rescaling and no frequency weighting. ``AVG_LOGPROB`` is the
length-normalized sum of per-token log-probabilities a conditional
generation model assigns to a target given a source.

Tokenization is owned entirely by the encoder/scorer backends; this
module never re-tokenizes text.
"""

from __future__ import annotations

import hashlib
import importlib
import json
import math
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Protocol

import numpy as np

# AVG_LOGPROB conditions the target on the source; recorded in run metadata.
LIKELIHOOD_DIRECTION = "source->target"


class Metric(str, Enum):
    TOKEN_F1 = "TOKEN_F1"
    AVG_LOGPROB = "AVG_LOGPROB"


@dataclass(frozen=True)
class SimilarityScore:
    value: float
    metric: Metric
    candidate_id: str = ""
    reference_id: str = ""


class EncoderError(RuntimeError):
    pass


class TokenEncoder(Protocol):
    """Produces one embedding vector per token of the input text."""

    def encode(self, text: str) -> np.ndarray:  # shape (n_tokens, dim)
        ...

    def metadata(self) -> dict:
        ...


class HashTokenEncoder:
    """Deterministic dependency-free encoder for offline runs and tests.

    Tokens are unicode word sequences, casefolded; each distinct token is
    embedded as a unit vector drawn from an RNG seeded by the token's
    SHA-256 and the encoder seed. Identical tokens map to identical
    vectors, distinct tokens to near-orthogonal ones.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _tokenize(self, text: str) -> list[str]:
        return re.findall(r"\w+", text.casefold(), flags=re.UNICODE)

    def _vector(self, token: str) -> np.ndarray:
        cached = self._cache.get(token)
        if cached is not None:
            return cached
        digest = hashlib.sha256(f"{self.seed}\x00{token}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        vec = rng.standard_normal(self.dim)
        vec /= np.linalg.norm(vec)
        self._cache[token] = vec
        return vec

    def encode(self, text: str) -> np.ndarray:
        tokens = self._tokenize(text)
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack([self._vector(t) for t in tokens])

    def metadata(self) -> dict:
        return {"kind": "hash", "dim": self.dim, "seed": self.seed}


class TableEncoder:
    """Embeds whitespace-separated tokens via an explicit token -> vector table."""

    def __init__(self, table: dict[str, list[float]]):
        if not table:
            raise ValueError("embedding table is empty")
        dims = {len(v) for v in table.values()}
        if len(dims) != 1:
            raise ValueError("embedding table vectors have inconsistent dimensions")
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}
        self.dim = dims.pop()

    @classmethod
    def from_file(cls, path: str | Path) -> "TableEncoder":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def encode(self, text: str) -> np.ndarray:
        tokens = text.split()
        if not tokens:
            return np.zeros((0, self.dim))
        rows = []
        for token in tokens:
            if token not in self.table:
                raise EncoderError(f"token {token!r} not in embedding table")
            rows.append(self.table[token])
        return np.stack(rows)

    def metadata(self) -> dict:
        return {"kind": "table", "dim": self.dim, "vocab_size": len(self.table)}


def load_encoder_plugin(ref: str) -> TokenEncoder:
    """Instantiate an encoder from a ``module:callable`` reference."""
    module_name, _, attr = ref.partition(":")
    if not module_name or not attr:
        raise ValueError(f"plugin reference {ref!r} must look like 'module:callable'")
    factory = getattr(importlib.import_module(module_name), attr)
    return factory()


def _normalize_rows(matrix: np.ndarray, label: str) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise EncoderError(f"{label} produced a zero-norm token vector")
    return matrix / norms


def token_similarity(
    candidate: str,
    reference: str,
    encoder: TokenEncoder,
    candidate_id: str = "",
    reference_id: str = "",
) -> SimilarityScore:
    """Greedy-match token F1 between two texts under a token encoder."""
    if not candidate or not reference:
        raise ValueError("candidate and reference must be nonempty")
    cand = encoder.encode(candidate)
    ref = encoder.encode(reference)
    if cand.shape[0] == 0:
        raise EncoderError(f"candidate {candidate_id or candidate!r} tokenizes to zero tokens")
    if ref.shape[0] == 0:
        raise EncoderError(f"reference {reference_id or reference!r} tokenizes to zero tokens")
    cand = _normalize_rows(cand, "candidate encoder")
    ref = _normalize_rows(ref, "reference encoder")
    sims = cand @ ref.T
    precision = float(sims.max(axis=1).mean())
    recall = float(sims.max(axis=0).mean())
    denom = precision + recall
    f1 = 0.0 if denom == 0 else 2.0 * precision * recall / denom
    return SimilarityScore(f1, Metric.TOKEN_F1, candidate_id, reference_id)


class Seq2SeqScorer(Protocol):
    """Exposes per-token log-probabilities of a target text given a source."""

    def token_logprobs(self, source: str, target: str) -> list[float]:
        ...

    def metadata(self) -> dict:
        ...


class HashLikelihoodScorer:
    """Deterministic stand-in scorer: pseudo log-probs in [-3, 0)."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def token_logprobs(self, source: str, target: str) -> list[float]:
        tokens = target.split()
        out = []
        for i in range(len(tokens)):
            digest = hashlib.sha256(f"{self.seed}\x00{source}\x00{target}\x00{i}".encode()).digest()
            unit = int.from_bytes(digest[:8], "big") / 2**64
            out.append(-3.0 * unit)
        return out

    def metadata(self) -> dict:
        return {"kind": "hash", "seed": self.seed}


def likelihood_score(
    source: str,
    target: str,
    scorer: Seq2SeqScorer,
    candidate_id: str = "",
    reference_id: str = "",
) -> SimilarityScore:
    """Mean per-token log-probability of target conditioned on source."""
    if not source or not target:
        raise ValueError("source and target must be nonempty")
    logprobs = scorer.token_logprobs(source, target)
    if not logprobs:
        raise EncoderError("target tokenizes to zero tokens")
    value = math.fsum(logprobs) / len(logprobs)
    return SimilarityScore(value, Metric.AVG_LOGPROB, candidate_id, reference_id)


@dataclass(frozen=True)
class ThresholdReport:
    mean: float
    std: float
    threshold: float
    n: int


def derive_threshold(scores: list[float]) -> ThresholdReport:
    """Mean minus one population standard deviation of the scores."""
    if len(scores) < 2:
        raise ValueError("need at least 2 scores to derive a threshold")
    n = len(scores)
    mean = math.fsum(scores) / n
    variance = math.fsum((s - mean) ** 2 for s in scores) / n
    std = math.sqrt(variance)
    return ThresholdReport(mean=mean, std=std, threshold=mean - std, n=n)


def write_score_dump(scores: list[SimilarityScore], path: str | Path) -> None:
    """One ``{"candidate_id", "reference_id", "metric", "value"}`` record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in scores:
            record = {
                "candidate_id": s.candidate_id,
                "reference_id": s.reference_id,
                "metric": s.metric.value,
                "value": s.value,
            }
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def score_reference_pairs(corpus, subset, encoder: TokenEncoder) -> list[float]:
    """TOKEN_F1 of (neutral reference, gendered reference) for a corpus subset."""
    values = []
    for entry in corpus:
        if entry.subset is not subset:
            continue
        score = token_similarity(
            entry.ref_neutral,
            entry.ref_gendered,
            encoder,
            candidate_id=f"{entry.id}#neutral",
            reference_id=f"{entry.id}#gendered",
        )
        values.append(score.value)
    return values
