"""Emission of adapter fine-tuning plans for an external trainer.

Plans pin the full recipe (adapter rank/alpha, learning rate, batch size,
early stopping) per model size class. The toolkit emits plans only; it
never runs optimization. Early stopping monitors held-out loss on a 5%
validation split carved deterministically from the SFT file by the
declared seed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

from .curation import DataSplit

PLAN_SCHEMA_VERSION = "1"

EARLY_STOP_METRIC = "validation_loss"
VALIDATION_FRACTION = 0.05


class ModelSizeClass(str, Enum):
    B8 = "B8"
    B14 = "B14"


_BATCH_SIZE = {ModelSizeClass.B8: 8, ModelSizeClass.B14: 4}
_PATIENCE = {ModelSizeClass.B8: 20, ModelSizeClass.B14: 40}


@dataclass(frozen=True)
class LoraPlan:
    rank: int
    alpha: int
    learning_rate: float
    batch_size: int
    early_stop_patience_steps: int
    model_size_class: ModelSizeClass
    data_split: DataSplit
    sft_path: str
    early_stop_metric: str = EARLY_STOP_METRIC
    validation_fraction: float = VALIDATION_FRACTION
    validation_seed: int = 0


def make_lora_plan(
    model_size_class: ModelSizeClass,
    data_split: DataSplit,
    sft_path: str | Path,
    validation_seed: int = 0,
) -> LoraPlan:
    """Default plan for a size class; fails if the SFT file is missing."""
    sft = Path(sft_path)
    if not sft.is_file():
        raise FileNotFoundError(f"SFT file not found: {sft}")
    return LoraPlan(
        rank=32,
        alpha=32,
        learning_rate=2e-4,
        batch_size=_BATCH_SIZE[model_size_class],
        early_stop_patience_steps=_PATIENCE[model_size_class],
        model_size_class=model_size_class,
        data_split=data_split,
        sft_path=str(sft),
        validation_seed=validation_seed,
    )


def write_plan(plan: LoraPlan, path: str | Path) -> None:
    """Serialize a plan; byte-stable for identical plans (no timestamps)."""
    body = {"schema_version": PLAN_SCHEMA_VERSION}
    body.update(asdict(plan))
    body["model_size_class"] = plan.model_size_class.value
    body["data_split"] = plan.data_split.value
    Path(path).write_text(
        json.dumps(body, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_plan(path: str | Path) -> LoraPlan:
    body = json.loads(Path(path).read_text(encoding="utf-8"))
    version = body.pop("schema_version", None)
    if version != PLAN_SCHEMA_VERSION:
        raise ValueError(f"unsupported plan schema version: {version!r}")
    body["model_size_class"] = ModelSizeClass(body["model_size_class"])
    body["data_split"] = DataSplit(body["data_split"])
    return LoraPlan(**body)
