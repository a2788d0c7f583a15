from __future__ import annotations

import pytest
import torch

from direct_re.corpus import load_dataset, make_record
from direct_re.encoding import ToyEncoder, WhitespaceTokenizer
from direct_re.fixtures import toy_corpus_path, toy_schema
from direct_re.heads import DirectModel
from direct_re.types import RelationSchema

ACCEPTANCE_RESULTS: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{status}] {name}: {detail}")


@pytest.fixture(scope="session")
def toy_corpus():
    return load_dataset(toy_corpus_path())


@pytest.fixture(scope="session")
def schema() -> RelationSchema:
    return toy_schema()


@pytest.fixture
def obama_record():
    return make_record("obama", "Barack Obama was born in Honolulu , USA .", [
        ("Barack Obama", "nationality", "USA"),
        ("Barack Obama", "president_of", "USA"),
        ("Barack Obama", "born_in", "Honolulu"),
        ("Honolulu", "located_in", "USA"),
    ])


@pytest.fixture(scope="session")
def toy_tokenizer(toy_corpus) -> WhitespaceTokenizer:
    return WhitespaceTokenizer.build(rec.sentence.text for rec in toy_corpus)


def small_model(tokenizer, num_relations=6, hidden=16, shared=False, dtype=torch.float32, seed=0):
    torch.manual_seed(seed)
    enc = ToyEncoder(len(tokenizer.vocab), hidden_size=hidden, num_layers=2, num_heads=4,
                     dropout=0.0, pad_id=tokenizer.pad_id)
    return DirectModel(enc, num_relations, shared_heads=shared).to(dtype)


@pytest.fixture
def tiny_model(toy_tokenizer):
    return small_model(toy_tokenizer)
