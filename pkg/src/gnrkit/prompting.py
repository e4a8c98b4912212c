"""Few-shot chat prompt construction for the four rewriting conditions.

A condition is a (template, language) pair selecting one of four canonical
system prompts shipped as package assets. Exemplars ("shots") are injected
as alternating user/assistant turns so the prompting format matches the
chat format used for fine-tuning data.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .corpus import CorpusFormatError, load_training_pairs


class Template(str, Enum):
    GFG = "GFG"
    REWRITE = "REWRITE"


class Language(str, Enum):
    ITA = "ITA"
    ENG = "ENG"


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str


@dataclass(frozen=True)
class ShotPair:
    gendered: str
    neutral: str

    def __post_init__(self):
        if not self.gendered or not self.neutral:
            raise ValueError("shot texts must be nonempty")
        if self.gendered == self.neutral:
            raise ValueError("shot gendered and neutral texts must differ")


_ASSET_NAMES = {
    (Template.GFG, Language.ITA): "system_gfg_ita.txt",
    (Template.GFG, Language.ENG): "system_gfg_eng.txt",
    (Template.REWRITE, Language.ITA): "system_rewrite_ita.txt",
    (Template.REWRITE, Language.ENG): "system_rewrite_eng.txt",
}


def asset_path(name: str) -> Path:
    return Path(str(resources.files("gnrkit").joinpath("assets", name)))


def system_prompt_text(template: Template, language: Language) -> str:
    """Exact byte content of the canonical system prompt for a condition."""
    return asset_path(_ASSET_NAMES[(template, language)]).read_text(encoding="utf-8")


def system_prompt_sha256(template: Template, language: Language) -> str:
    data = asset_path(_ASSET_NAMES[(template, language)]).read_bytes()
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class PromptCondition:
    template: Template
    language: Language
    system_text: str

    @classmethod
    def load(cls, template: Template, language: Language) -> "PromptCondition":
        return cls(template, language, system_prompt_text(template, language))

    @property
    def condition_id(self) -> str:
        return f"{self.template.value.lower()}-{self.language.value.lower()}"


def parse_condition_id(condition_id: str) -> tuple[Template, Language]:
    """Parse a ``"gfg-ita"``-style identifier into its template and language."""
    try:
        template_part, language_part = condition_id.split("-")
        return Template(template_part.upper()), Language(language_part.upper())
    except ValueError:
        valid = ", ".join(
            f"{t.value.lower()}-{l.value.lower()}" for t in Template for l in Language
        )
        raise ValueError(f"unknown condition {condition_id!r}; expected one of: {valid}") from None


def all_conditions() -> list[PromptCondition]:
    return [PromptCondition.load(t, l) for t in Template for l in Language]


def build_messages(
    condition: PromptCondition,
    shots: list[ShotPair],
    input_sentence: str,
) -> list[ChatMessage]:
    """Build the chat sequence: system prompt, shot turns, then the input.

    The result is ``[system] + [user, assistant] * len(shots) + [user]``,
    so its length is always ``2 * len(shots) + 2``.
    """
    if not input_sentence:
        raise ValueError("input sentence must be nonempty")
    messages = [ChatMessage(Role.SYSTEM, condition.system_text)]
    for shot in shots:
        messages.append(ChatMessage(Role.USER, shot.gendered))
        messages.append(ChatMessage(Role.ASSISTANT, shot.neutral))
    messages.append(ChatMessage(Role.USER, input_sentence))
    return messages


def load_shots(path: str | Path) -> list[ShotPair]:
    """Load shots from a training-pair file, in file order."""
    pairs = load_training_pairs(path)
    shots = []
    for index, pair in enumerate(pairs, start=1):
        try:
            shots.append(ShotPair(pair.gendered, pair.neutral))
        except ValueError as exc:
            raise CorpusFormatError(path, index, f"invalid shot pair {pair.id!r}: {exc}") from exc
    return shots


def default_shots_path() -> Path:
    """Built-in exemplars, hand-curated for this toolkit; override via --shots."""
    return asset_path("default_shots.jsonl")


def validate_message_sequence(messages: list[ChatMessage]) -> None:
    """Check the system-first, alternating user/assistant, user-last shape."""
    if not messages:
        raise ValueError("message sequence is empty")
    if messages[0].role is not Role.SYSTEM:
        raise ValueError("first message must have the system role")
    expected = Role.USER
    for msg in messages[1:]:
        if msg.role is not expected:
            raise ValueError(f"expected {expected.value} message, got {msg.role.value}")
        if not msg.content:
            raise ValueError("message content must be nonempty")
        expected = Role.ASSISTANT if expected is Role.USER else Role.USER
    if messages[-1].role is not Role.USER:
        raise ValueError("sequence must end with a user message")
