"""Predicted-logits cost of the edge-list, adjacency-matrix and adjacency-list designs."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

from .corpus import Record
from .types import Sentence


class ModelKind(str, Enum):
    EDGE_LIST_COPYRE = "EdgeList_CopyRE"
    ADJ_MATRIX_MHS = "AdjMatrix_MHS"
    ADJ_LIST_CASREL = "AdjList_CasRel"
    ADJ_LIST_DIRECT = "AdjList_DIRECT"


SHORT_NAMES = {
    "copyre": ModelKind.EDGE_LIST_COPYRE,
    "mhs": ModelKind.ADJ_MATRIX_MHS,
    "casrel": ModelKind.ADJ_LIST_CASREL,
    "direct": ModelKind.ADJ_LIST_DIRECT,
}


def parse_kind(name: str) -> ModelKind:
    try:
        return SHORT_NAMES[name.lower()]
    except KeyError:
        return ModelKind(name)


@dataclass(frozen=True)
class CostStats:
    l: int  # sentence length in tokens
    k: int  # triplets
    r: int  # relation types
    s: int  # distinct subjects (adjacency-list keys)
    o: int  # distinct (subject, object) pairs (adjacency-list values)

    def __post_init__(self) -> None:
        for name in ("l", "k", "r", "s", "o"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def logits_cost(kind: ModelKind, cs: CostStats) -> int:
    kind = ModelKind(kind)
    if kind is ModelKind.EDGE_LIST_COPYRE:
        return 4 * cs.k * cs.l + cs.k * cs.r
    if kind is ModelKind.ADJ_MATRIX_MHS:
        return cs.l * cs.l * cs.r
    if kind is ModelKind.ADJ_LIST_CASREL:
        return 2 * cs.l + 2 * cs.s * cs.l * cs.r
    return 2 * cs.l + 2 * cs.s * cs.l + cs.o * cs.r


def word_length(sentence: Sentence) -> int:
    return len(sentence.text.split())


def token_length(sentence: Sentence) -> int:
    return len(sentence.tokens)


def cost_stats(rec: Record, num_relations: int,
               length: Callable[[Sentence], int] = token_length) -> CostStats:
    triples = list(dict.fromkeys(t.as_tuple() for t in rec.triples))
    return CostStats(
        l=length(rec.sentence),
        k=len(triples),
        r=num_relations,
        s=len({s for s, _, _ in triples}),
        o=len({(s, o) for s, _, o in triples}),
    )


def dataset_cost(corpus: Sequence[Record], kind: ModelKind, num_relations: int,
                 length: Callable[[Sentence], int] = token_length) -> float:
    """Mean per-sentence logits cost over a corpus split."""
    if not corpus:
        return 0.0
    return sum(logits_cost(kind, cost_stats(rec, num_relations, length)) for rec in corpus) / len(corpus)


def cost_report(corpus: Sequence[Record], num_relations: int, kinds: Iterable[ModelKind],
                lengths: dict[str, Callable[[Sentence], int]] | None = None) -> dict:
    lengths = lengths or {"tokens": token_length}
    return {
        "version": 1,
        "sentences": len(corpus),
        "relations": num_relations,
        "costs": {
            name: {ModelKind(k).value: dataset_cost(corpus, k, num_relations, fn) for k in kinds}
            for name, fn in lengths.items()
        },
    }


def format_cost_report(report: dict) -> str:
    names = list(report["costs"])
    kinds = list(next(iter(report["costs"].values()))) if names else []
    width = max([len(k) for k in kinds] + [6])
    lines = [f"{'Method':<{width}}" + "".join(f"{n:>14}" for n in names)]
    for k in kinds:
        lines.append(f"{k:<{width}}" + "".join(f"{report['costs'][n][k]:>14.1f}" for n in names))
    return "\n".join(lines)
