from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnrkit.corpus import CorpusFormatError
from gnrkit.prompting import (
    ChatMessage,
    Language,
    PromptCondition,
    Role,
    ShotPair,
    Template,
    all_conditions,
    build_messages,
    default_shots_path,
    load_shots,
    parse_condition_id,
    system_prompt_sha256,
    validate_message_sequence,
)

from conftest import write_jsonl

# Pinned digests of the four canonical system-prompt assets.
PINNED_SHA256 = {
    (Template.GFG, Language.ITA): "4048a839bc64efaddd16d4cc928b952ea7b6230ad34cbe99c8b66dfcaa685128",
    (Template.GFG, Language.ENG): "19c753cc5ee1ff2b19e4777a31b3fee174e22499cebf4156e135eae745c3693b",
    (Template.REWRITE, Language.ITA): "6cbdb4a1b45ffacddbcee148be43771b4830193a4998419d26c165a7d23a5f47",
    (Template.REWRITE, Language.ENG): "9049ca230a28e01fb34ea5feab8f4ae74c398e0572f30b2b594d216957876d55",
}


@pytest.mark.parametrize("template", list(Template))
@pytest.mark.parametrize("language", list(Language))
def test_system_prompts_hash_pinned(template, language):
    assert system_prompt_sha256(template, language) == PINNED_SHA256[(template, language)]


def test_system_prompts_pairwise_distinct():
    texts = [c.system_text for c in all_conditions()]
    assert len(set(texts)) == 4


def test_gfg_english_first_message_prefix():
    condition = PromptCondition.load(Template.GFG, Language.ENG)
    messages = build_messages(condition, [], "Una frase qualsiasi.")
    assert messages[0].content.startswith("Rewrite the following Italian sentence")


def test_build_messages_eight_shots_gives_eighteen():
    condition = PromptCondition.load(Template.REWRITE, Language.ITA)
    shots = load_shots(default_shots_path())
    assert len(shots) == 8
    messages = build_messages(condition, shots, "I ragazzi sono arrivati.")
    assert len(messages) == 18  # 1 + 2*8 + 1
    validate_message_sequence(messages)


def test_build_messages_zero_shots():
    condition = PromptCondition.load(Template.GFG, Language.ITA)
    messages = build_messages(condition, [], "I ragazzi sono arrivati.")
    assert [m.role for m in messages] == [Role.SYSTEM, Role.USER]
    assert messages[1].content == "I ragazzi sono arrivati."


def test_build_messages_rejects_empty_input():
    condition = PromptCondition.load(Template.GFG, Language.ITA)
    with pytest.raises(ValueError, match="nonempty"):
        build_messages(condition, [], "")


_shot_text = st.text(min_size=1, max_size=30).filter(lambda s: s.strip())


@given(st.lists(st.tuples(_shot_text, _shot_text), max_size=12), _shot_text)
def test_build_messages_length_and_role_pattern(raw_shots, sentence):
    shots = [ShotPair(g, n if g != n else n + "!") for g, n in raw_shots]
    condition = PromptCondition.load(Template.GFG, Language.ITA)
    messages = build_messages(condition, shots, sentence)
    assert len(messages) == 2 * len(shots) + 2
    validate_message_sequence(messages)
    assert messages[0].role is Role.SYSTEM
    assert messages[-1].role is Role.USER
    assert messages[-1].content == sentence


def test_shot_pair_requires_difference():
    with pytest.raises(ValueError):
        ShotPair("uguale", "uguale")


def test_load_shots_empty_file(tmp_path):
    path = tmp_path / "shots.jsonl"
    path.write_text("", encoding="utf-8")
    assert load_shots(path) == []


def test_load_shots_malformed_line(tmp_path):
    path = write_jsonl(tmp_path / "shots.jsonl", [{"id": "s1", "gendered": "solo metà"}])
    with pytest.raises(CorpusFormatError) as exc_info:
        load_shots(path)
    assert exc_info.value.line == 1


def test_parse_condition_id_round_trip():
    for condition in all_conditions():
        assert parse_condition_id(condition.condition_id) == (
            condition.template,
            condition.language,
        )
    with pytest.raises(ValueError, match="unknown condition"):
        parse_condition_id("gfg-fra")


def test_validate_message_sequence_rejects_bad_shapes():
    system = ChatMessage(Role.SYSTEM, "s")
    user = ChatMessage(Role.USER, "u")
    assistant = ChatMessage(Role.ASSISTANT, "a")
    with pytest.raises(ValueError):
        validate_message_sequence([])
    with pytest.raises(ValueError):
        validate_message_sequence([user])
    with pytest.raises(ValueError):
        validate_message_sequence([system, assistant])
    with pytest.raises(ValueError):
        validate_message_sequence([system, user, assistant])  # must end with user
    validate_message_sequence([system, user, assistant, user])
