from __future__ import annotations

import pytest

from gnrkit.curation import DataSplit
from gnrkit.finetune import (
    EARLY_STOP_METRIC,
    VALIDATION_FRACTION,
    LoraPlan,
    ModelSizeClass,
    load_plan,
    make_lora_plan,
    write_plan,
)


@pytest.fixture
def sft_file(tmp_path):
    path = tmp_path / "train.sft.jsonl"
    path.write_text(
        '{"messages": [{"role": "user", "content": "g"}, {"role": "assistant", "content": "n"}]}\n',
        encoding="utf-8",
    )
    return path


def test_plan_b8_full_defaults(sft_file):
    plan = make_lora_plan(ModelSizeClass.B8, DataSplit.FULL, sft_file)
    assert plan.rank == 32
    assert plan.alpha == 32
    assert plan.learning_rate == 2e-4
    assert plan.batch_size == 8
    assert plan.early_stop_patience_steps == 20
    assert plan.data_split is DataSplit.FULL


def test_plan_b14_clean_defaults(sft_file):
    plan = make_lora_plan(ModelSizeClass.B14, DataSplit.CLEAN, sft_file)
    assert plan.batch_size == 4
    assert plan.early_stop_patience_steps == 40
    assert plan.rank == 32 and plan.alpha == 32
    assert plan.learning_rate == 2e-4


def test_plan_missing_sft_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        make_lora_plan(ModelSizeClass.B8, DataSplit.FULL, tmp_path / "nope.jsonl")


def test_plan_declares_early_stopping_contract(sft_file):
    plan = make_lora_plan(ModelSizeClass.B8, DataSplit.FULL, sft_file, validation_seed=7)
    assert plan.early_stop_metric == EARLY_STOP_METRIC == "validation_loss"
    assert plan.validation_fraction == VALIDATION_FRACTION == 0.05
    assert plan.validation_seed == 7


def test_plan_round_trip(sft_file, tmp_path):
    plan = make_lora_plan(ModelSizeClass.B14, DataSplit.CLEAN, sft_file, validation_seed=3)
    path = tmp_path / "plan.json"
    write_plan(plan, path)
    assert load_plan(path) == plan


def test_plan_serialization_byte_stable(sft_file, tmp_path):
    plan = make_lora_plan(ModelSizeClass.B8, DataSplit.FULL, sft_file)
    path_a = tmp_path / "a.json"
    path_b = tmp_path / "b.json"
    write_plan(plan, path_a)
    write_plan(plan, path_b)
    assert path_a.read_bytes() == path_b.read_bytes()
    body = path_a.read_text(encoding="utf-8")
    assert '"schema_version"' in body
    for field in (
        "rank",
        "alpha",
        "learning_rate",
        "batch_size",
        "early_stop_patience_steps",
        "model_size_class",
        "data_split",
        "sft_path",
    ):
        assert f'"{field}"' in body


def test_plan_rejects_unknown_schema(tmp_path, sft_file):
    plan = make_lora_plan(ModelSizeClass.B8, DataSplit.FULL, sft_file)
    path = tmp_path / "plan.json"
    write_plan(plan, path)
    import json

    body = json.loads(path.read_text(encoding="utf-8"))
    body["schema_version"] = "99"
    path.write_text(json.dumps(body), encoding="utf-8")
    with pytest.raises(ValueError, match="schema version"):
        load_plan(path)


def test_plan_equality_is_structural(sft_file):
    a = make_lora_plan(ModelSizeClass.B8, DataSplit.FULL, sft_file)
    b = make_lora_plan(ModelSizeClass.B8, DataSplit.FULL, sft_file)
    assert a == b
    assert isinstance(a, LoraPlan)
