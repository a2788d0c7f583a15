"""Templated synthetic corpus used for desk-scale end-to-end runs.

Regenerate the shipped file with ``python -m direct_re.fixtures``.
"""

from __future__ import annotations

import random
from importlib import resources
from pathlib import Path

from .corpus import make_record, save_corpus
from .types import RelationSchema

RELATIONS = ("born_in", "nationality", "president_of", "located_in", "works_for", "founded")

PERSONS = [
    "Barack Obama", "Angela Merkel", "Maria Lopez", "Kenji Sato", "Ada Lovelace",
    "Nelson Mandela", "Olga Petrova", "Tom Baker", "Amara Okafor", "Lars Nilsson",
    "Priya Raman", "Chen Wei", "Sofia Rossi", "Jonas", "Fatima Zahra", "Diego Alvarez",
]
PLACES = [  # (city, country)
    ("Honolulu", "USA"), ("Hamburg", "Germany"), ("Kyoto", "Japan"),
    ("Cape Town", "South Africa"), ("Lyon", "France"), ("San Diego", "USA"),
    ("Turin", "Italy"), ("Uppsala", "Sweden"), ("Chennai", "India"), ("Lagos", "Nigeria"),
    ("Porto", "Portugal"), ("Osaka", "Japan"),
]
COMPANIES = [
    "Acme Corp", "Blue River Labs", "Nordwind", "Helios Energy", "Quantum Leaf",
    "Red Maple Studios", "Orbital", "Greenfield Foods",
]

# Each template maps slot fillers to (text, triples). Slots: p, q (persons),
# c, k (city, country), d, m (second city, country), co, cz (companies).
TEMPLATES = [
    ("{p} works for {co} .",
     [("p", "works_for", "co")]),
    ("{c} is a city in {k} .",
     [("c", "located_in", "k")]),
    ("{p} was born in {c} , a city in {k} .",
     [("p", "born_in", "c"), ("c", "located_in", "k")]),
    ("{p} is the president and a citizen of {k} .",
     [("p", "president_of", "k"), ("p", "nationality", "k")]),
    ("{p} founded {co} and works for {co} today .",
     [("p", "founded", "co"), ("p", "works_for", "co")]),
    ("{p} , born in {c} , founded {co} .",
     [("p", "born_in", "c"), ("p", "founded", "co")]),
    ("{p} was born in {c} , {k} , and became the president of {k} .",
     [("p", "born_in", "c"), ("c", "located_in", "k"), ("p", "nationality", "k"),
      ("p", "president_of", "k")]),
    ("{p} works for {co} while {q} was born in {d} .",
     [("p", "works_for", "co"), ("q", "born_in", "d")]),
]


def make_toy_records(seed: int = 0, per_template: int = 8) -> list[dict]:
    rng = random.Random(seed)
    records, seen = [], set()
    for t_idx, (pattern, triples) in enumerate(TEMPLATES):
        made = 0
        while made < per_template:
            p, q = rng.sample(PERSONS, 2)
            (c, k), (d, m) = rng.sample(PLACES, 2)
            co, cz = rng.sample(COMPANIES, 2)
            slots = dict(p=p, q=q, c=c, k=k, d=d, m=m, co=co, cz=cz)
            text = pattern.format(**slots)
            if text in seen:
                continue
            seen.add(text)
            made += 1
            records.append({
                "id": f"toy-{t_idx}-{made}",
                "text": text,
                "triples": [[slots[s], r, slots[o]] for s, r, o in triples],
            })
    rng.shuffle(records)
    return records


def toy_schema() -> RelationSchema:
    return RelationSchema(RELATIONS)


def toy_corpus_path() -> Path:
    return Path(str(resources.files("direct_re") / "data" / "toy_corpus.jsonl"))


def write_toy_corpus(path: str | Path, seed: int = 0) -> None:
    corpus = [make_record(r["id"], r["text"], r["triples"]) for r in make_toy_records(seed)]
    save_corpus(corpus, toy_schema(), path)


if __name__ == "__main__":
    write_toy_corpus(toy_corpus_path())
    print(toy_corpus_path())
