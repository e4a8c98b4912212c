from __future__ import annotations

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnrkit.corpus import TrainingPair
from gnrkit.curation import (
    DataSplit,
    export_chat_sft,
    median_filter,
    read_chat_sft,
    score_pairs,
    split_stats,
    write_histogram_csv,
)
from gnrkit.similarity import HashTokenEncoder, token_similarity


def scored(values: list[float]) -> list[TrainingPair]:
    return [
        TrainingPair(f"p{i}", f"gendered {i}", f"neutral {i}", similarity=v)
        for i, v in enumerate(values)
    ]


def test_score_pairs_degenerate_equal_texts():
    pairs = [TrainingPair("p0", "lo stesso testo", "lo stesso testo")]
    result = score_pairs(pairs, HashTokenEncoder())
    assert result[0].similarity == pytest.approx(1.0, abs=1e-6)


def test_score_pairs_preserves_order_and_inputs():
    pairs = [
        TrainingPair("p0", "una frase marcata", "una resa neutra"),
        TrainingPair("p1", "altra frase", "altra resa"),
    ]
    encoder = HashTokenEncoder(dim=32)
    result = score_pairs(pairs, encoder)
    assert [p.id for p in result] == ["p0", "p1"]
    assert pairs[0].similarity is None  # inputs untouched
    direct = token_similarity("una resa neutra", "una frase marcata", encoder).value
    assert result[0].similarity == pytest.approx(direct, abs=1e-12)


def test_score_pairs_toy_embeddings_match_hand_oracle(toy_encoder):
    pairs = [
        TrainingPair("p0", "a a", "a b"),  # P=(1+0)/2, R=(1+1)/2 -> F1=2/3
        TrainingPair("p1", "a", "a"),      # identical -> 1.0
        TrainingPair("p2", "b b", "a"),    # P=0, R=0 -> 0.0
    ]
    result = score_pairs(pairs, toy_encoder)
    assert result[0].similarity == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert result[1].similarity == pytest.approx(1.0, abs=1e-12)
    assert result[2].similarity == pytest.approx(0.0, abs=1e-12)


def test_score_pairs_error_names_pair_id(toy_encoder):
    pairs = [TrainingPair("p-bad", "token sconosciuto", "a")]
    with pytest.raises(RuntimeError, match="p-bad"):
        score_pairs(pairs, toy_encoder)


def test_median_filter_ten_distinct_scores():
    values = [0.91, 0.42, 0.77, 0.13, 0.99, 0.55, 0.68, 0.24, 0.86, 0.31]
    kept, summary = median_filter(scored(values))
    assert summary.kept == 5
    assert summary.total == 10
    assert len(kept) == 5
    kept_values = [p.similarity for p in kept]
    dropped_values = [v for v in values if v not in kept_values]
    assert min(kept_values) >= max(dropped_values)
    assert summary.min_kept == min(kept_values)
    assert summary.max_dropped == max(dropped_values)
    # top half by value: 0.99, 0.91, 0.86, 0.77, 0.68
    assert sorted(kept_values, reverse=True) == [0.99, 0.91, 0.86, 0.77, 0.68]
    # original relative order restored
    assert [p.id for p in kept] == ["p0", "p2", "p4", "p6", "p8"]


def test_median_filter_all_tied_keeps_earliest():
    kept, summary = median_filter(scored([0.9, 0.9, 0.9, 0.9]))
    assert summary.kept == 2
    assert [p.id for p in kept] == ["p0", "p1"]
    assert summary.min_kept == summary.max_dropped == 0.9
    assert summary.median == 0.9
    assert summary.split_name is DataSplit.CLEAN


def test_median_filter_odd_count_keeps_ceil_half():
    kept, summary = median_filter(scored([0.1, 0.2, 0.3]))
    assert summary.kept == 2
    assert [p.similarity for p in kept] == [0.2, 0.3]


def test_median_filter_single_pair():
    kept, summary = median_filter(scored([0.5]))
    assert summary.kept == 1
    assert summary.max_dropped is None
    assert kept[0].id == "p0"


def test_median_filter_rejects_unscored():
    pairs = [TrainingPair("p0", "g", "n")]
    with pytest.raises(ValueError, match="no similarity"):
        median_filter(pairs)


def test_median_filter_rejects_empty():
    with pytest.raises(ValueError):
        median_filter([])


@given(st.lists(st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=1, max_size=60))
def test_median_filter_partition_properties(values):
    pairs = scored(values)
    kept, summary = median_filter(pairs)
    kept_ids = {p.id for p in kept}
    dropped = [p for p in pairs if p.id not in kept_ids]
    # kept and dropped partition the input
    assert len(kept) + len(dropped) == len(pairs)
    assert summary.kept == len(kept) == math.ceil(len(pairs) / 2)
    # boundary inequality (weak at ties)
    if dropped:
        assert min(p.similarity for p in kept) >= max(p.similarity for p in dropped)
    # determinism
    kept_again, _ = median_filter(pairs)
    assert kept_again == kept


def test_export_chat_sft_and_parse_back(tmp_path):
    pairs = [TrainingPair("p0", "I colleghi sono pregati di rispondere.", "Si prega di rispondere.")]
    path = tmp_path / "sft.jsonl"
    count = export_chat_sft(pairs, path)
    assert count == 1
    parsed = read_chat_sft(path)
    assert parsed == [(pairs[0].gendered, pairs[0].neutral)]


def test_export_chat_sft_empty(tmp_path):
    path = tmp_path / "empty.jsonl"
    assert export_chat_sft([], path) == 0
    assert path.read_text(encoding="utf-8") == ""
    assert read_chat_sft(path) == []


def test_export_chat_sft_record_shape(tmp_path):
    import json

    path = tmp_path / "sft.jsonl"
    export_chat_sft([TrainingPair("p0", "frase marcata", "frase neutra")], path)
    record = json.loads(path.read_text(encoding="utf-8"))
    assert record == {
        "messages": [
            {"role": "user", "content": "frase marcata"},
            {"role": "assistant", "content": "frase neutra"},
        ]
    }


def test_split_stats_constant_scores():
    mean, bins = split_stats(scored([0.5, 0.5, 0.5]))
    assert mean == pytest.approx(0.5, abs=1e-12)
    occupied = [b for b in bins if b.count]
    assert len(occupied) == 1
    assert occupied[0].count == 3
    assert occupied[0].start <= 0.5 < occupied[0].end


def test_split_stats_bins_cover_all_scores(tmp_path):
    values = [0.31, 0.55, 0.82, 0.97, 0.99]
    mean, bins = split_stats(scored(values))
    assert mean == pytest.approx(sum(values) / len(values), abs=1e-12)
    assert sum(b.count for b in bins) == len(values)
    path = tmp_path / "hist.csv"
    write_histogram_csv(bins, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "bin_start,bin_end,count"
    assert len(lines) == len(bins) + 1


def test_split_stats_rejects_unscored_and_empty():
    with pytest.raises(ValueError):
        split_stats([])
    with pytest.raises(ValueError, match="no similarity"):
        split_stats([TrainingPair("p0", "g", "n")])
