from __future__ import annotations

import json

import pytest

from gnrkit.corpus import TrainingPair
from gnrkit.similarity import TableEncoder


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


def corpus_record(i, subset="SET_N"):
    return {
        "id": f"e{i:04d}",
        "subset": subset,
        "ref_gendered": f"I colleghi numero {i} sono stati avvisati.",
        "ref_neutral": f"Il personale numero {i} ha ricevuto l'avviso.",
    }


@pytest.fixture
def corpus_file(tmp_path):
    def make(n_set_n=4, n_set_g=2, path=None):
        records = [corpus_record(i, "SET_N") for i in range(n_set_n)]
        records += [corpus_record(1000 + i, "SET_G") for i in range(n_set_g)]
        return write_jsonl(path or tmp_path / "corpus.jsonl", records)

    return make


@pytest.fixture
def pairs_file(tmp_path):
    def make(pairs: list[TrainingPair], path=None):
        records = []
        for p in pairs:
            record = {"id": p.id, "gendered": p.gendered, "neutral": p.neutral}
            if p.similarity is not None:
                record["similarity"] = p.similarity
            records.append(record)
        return write_jsonl(path or tmp_path / "pairs.jsonl", records)

    return make


@pytest.fixture
def toy_encoder():
    # Hand-set orthogonal unit embeddings over a two-token vocabulary.
    return TableEncoder({"a": [1.0, 0.0], "b": [0.0, 1.0]})
