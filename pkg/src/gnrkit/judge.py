"""Binary gendered/neutral judgments from a judge backend.

The judge prompt is a replaceable text asset with a ``{sentence}``
placeholder. Responses are parsed with a pinned keyword rule; verdicts
are cached on disk keyed by (judge model, prompt hash, sentence) so
repeated runs over the same outputs are free and deterministic.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from pathlib import Path

from .gateway import BackendDescriptor, Gateway, GenerationRequest
from .prompting import ChatMessage, Role, asset_path

NEUTRAL_KEYWORDS = ("neutral", "neutro")
GENDERED_KEYWORDS = ("gendered", "genere marcato")

# Appended to the user turn on re-asks after an unparseable response.
CLARIFY_SUFFIX = 'Answer with exactly one word: "gendered" or "neutral".'

JUDGE_SYSTEM_TEXT = "You are a careful annotator of gender marking in Italian text."


class VerdictLabel(str, Enum):
    GENDERED = "GENDERED"
    NEUTRAL = "NEUTRAL"


@dataclass(frozen=True)
class JudgeVerdict:
    sentence_id: str
    label: VerdictLabel
    raw_response: str
    attempts: int


class JudgeError(RuntimeError):
    def __init__(self, message: str, attempts: int = 0):
        super().__init__(message)
        self.attempts = attempts


def default_judge_prompt_path() -> Path:
    return asset_path("judge_prompt.txt")


def load_judge_prompt(path: str | Path | None = None) -> str:
    prompt_path = Path(path) if path is not None else default_judge_prompt_path()
    text = prompt_path.read_text(encoding="utf-8")
    if "{sentence}" not in text:
        raise ValueError(f"judge prompt {prompt_path} lacks the {{sentence}} placeholder")
    return text


def parse_verdict(
    response: str,
    neutral_keywords: tuple[str, ...] = NEUTRAL_KEYWORDS,
    gendered_keywords: tuple[str, ...] = GENDERED_KEYWORDS,
) -> VerdictLabel | None:
    """Earliest keyword occurrence wins; None when no keyword is present.

    Matching is case-insensitive over the whole response.
    """
    lowered = response.lower()

    def first_index(keywords: tuple[str, ...]) -> int:
        hits = [lowered.find(k.lower()) for k in keywords]
        hits = [h for h in hits if h >= 0]
        return min(hits) if hits else -1

    neutral_at = first_index(neutral_keywords)
    gendered_at = first_index(gendered_keywords)
    if neutral_at < 0 and gendered_at < 0:
        return None
    if neutral_at < 0:
        return VerdictLabel.GENDERED
    if gendered_at < 0:
        return VerdictLabel.NEUTRAL
    if neutral_at == gendered_at:
        return None
    return VerdictLabel.NEUTRAL if neutral_at < gendered_at else VerdictLabel.GENDERED


class VerdictCache:
    """One JSON file per (judge model, prompt hash, sentence) key."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key_for(judge_model: str, prompt_sha256: str, sentence: str) -> str:
        material = json.dumps(
            {"judge_model": judge_model, "prompt_sha256": prompt_sha256, "sentence": sentence},
            ensure_ascii=False,
            sort_keys=True,
        )
        return hashlib.sha256(material.encode("utf-8")).hexdigest()

    def get(self, key: str) -> dict | None:
        path = self.directory / f"{key}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, key: str, record: dict) -> None:
        path = self.directory / f"{key}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(record, ensure_ascii=False, sort_keys=True), encoding="utf-8")
        os.replace(tmp, path)


@dataclass
class Judge:
    """Judges sentences through a gateway-registered backend."""

    gateway: Gateway
    backend: BackendDescriptor
    prompt_template: str
    max_attempts: int = 3
    max_new_tokens: int = 32
    neutral_keywords: tuple[str, ...] = NEUTRAL_KEYWORDS
    gendered_keywords: tuple[str, ...] = GENDERED_KEYWORDS
    cache: VerdictCache | None = None

    @property
    def prompt_sha256(self) -> str:
        return hashlib.sha256(self.prompt_template.encode("utf-8")).hexdigest()

    def judge_sentence(self, sentence: str, sentence_id: str = "") -> JudgeVerdict:
        """Return the binary verdict; raises JudgeError after retries fail."""
        if not sentence:
            raise JudgeError("cannot judge an empty sentence")
        cache_key = None
        if self.cache is not None:
            cache_key = VerdictCache.key_for(self.backend.model_name, self.prompt_sha256, sentence)
            hit = self.cache.get(cache_key)
            if hit is not None:
                return JudgeVerdict(
                    sentence_id, VerdictLabel(hit["label"]), hit["raw_response"], hit["attempts"]
                )

        user_text = self.prompt_template.replace("{sentence}", sentence)
        raw_response = ""
        for attempt in range(1, self.max_attempts + 1):
            content = user_text if attempt == 1 else f"{user_text}\n\n{CLARIFY_SUFFIX}"
            request = GenerationRequest(
                messages=(
                    ChatMessage(Role.SYSTEM, JUDGE_SYSTEM_TEXT),
                    ChatMessage(Role.USER, content),
                ),
                backend_id=self.backend.id,
                max_new_tokens=self.max_new_tokens,
                temperature=0.0,
            )
            result = self.gateway.generate(request)
            if result.error is not None:
                raise JudgeError(f"judge backend failed: {result.error}", attempts=attempt)
            raw_response = result.text
            label = parse_verdict(raw_response, self.neutral_keywords, self.gendered_keywords)
            if label is not None:
                verdict = JudgeVerdict(sentence_id, label, raw_response, attempt)
                if self.cache is not None and cache_key is not None:
                    self.cache.put(
                        cache_key,
                        {"label": label.value, "raw_response": raw_response, "attempts": attempt},
                    )
                return verdict
        raise JudgeError(
            f"unparseable judge response after {self.max_attempts} attempts: {raw_response!r}",
            attempts=self.max_attempts,
        )


def neutrality_accuracy(verdicts: list[JudgeVerdict]) -> float:
    """Percentage of NEUTRAL verdicts, rounded half-up to two decimals."""
    if not verdicts:
        raise ValueError("verdict list is empty")
    neutral = sum(1 for v in verdicts if v.label is VerdictLabel.NEUTRAL)
    return round_percentage(100.0 * neutral / len(verdicts))


def round_percentage(value: float) -> float:
    return float(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))
