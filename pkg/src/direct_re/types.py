"""Shared record types used across the corpus, encoding and pipeline modules."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class Task(str, Enum):
    SUBJECT = "s"
    OBJECT = "o"
    RELATION = "r"


@dataclass(frozen=True)
class Token:
    index: int
    surface: str
    char_start: int
    char_end: int
    # vocabulary piece when it differs from the surface (e.g. "##ing")
    piece: str | None = None

    @property
    def key(self) -> str:
        return self.piece if self.piece is not None else self.surface


@dataclass(frozen=True)
class Sentence:
    id: str
    text: str
    tokens: tuple[Token, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def span_text(self, start: int, end: int) -> str:
        """Surface string covered by the inclusive token span ``[start, end]``."""
        return self.text[self.tokens[start].char_start : self.tokens[end].char_end]


Span = tuple[int, int]


@dataclass(frozen=True)
class RelationalTriplet:
    subject: str
    relation: str
    object: str
    # first aligned occurrence, inclusive token indices; None when unalignable
    subject_span: Span | None = field(default=None, compare=False)
    object_span: Span | None = field(default=None, compare=False)

    @property
    def aligned(self) -> bool:
        return self.subject_span is not None and self.object_span is not None

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.subject, self.relation, self.object)


@dataclass(frozen=True)
class RelationSchema:
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.labels:
            raise ValueError("relation schema must contain at least one label")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("relation labels must be unique")
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(self.labels)})

    @property
    def c(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: object) -> bool:
        return label in self._index  # type: ignore[attr-defined]

    def index(self, label: str) -> int:
        try:
            return self._index[label]  # type: ignore[attr-defined]
        except KeyError:
            raise KeyError(f"unknown relation label: {label!r}") from None


@dataclass(frozen=True)
class OverlapFlags:
    normal: bool
    epo: bool
    seo: bool


class AdjacencyListOutput:
    """Subject -> [(object, relations)] mapping produced by cascade extraction."""

    def __init__(self) -> None:
        self.entries: dict[str, dict[str, set[str]]] = {}

    def add(self, subject: str, obj: str, relations) -> None:
        relations = set(relations)
        if not relations:
            return
        self.entries.setdefault(subject, {}).setdefault(obj, set()).update(relations)

    def __len__(self) -> int:
        return sum(len(objs) for objs in self.entries.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AdjacencyListOutput):
            return NotImplemented
        return self.entries == other.entries

    def __repr__(self) -> str:
        return f"AdjacencyListOutput({self.to_json()!r})"

    def items(self):
        for subject, objs in self.entries.items():
            yield subject, [(obj, set(rels)) for obj, rels in objs.items()]

    def to_json(self) -> dict[str, list[list]]:
        return {
            subject: [[obj, sorted(rels)] for obj, rels in objs.items()]
            for subject, objs in self.entries.items()
        }

    @classmethod
    def from_json(cls, data: dict[str, list[list]]) -> "AdjacencyListOutput":
        adj = cls()
        for subject, objs in data.items():
            for obj, rels in objs:
                adj.add(subject, obj, rels)
        return adj

    @classmethod
    def from_triples(cls, triples) -> "AdjacencyListOutput":
        adj = cls()
        for t in triples:
            s, r, o = t.as_tuple() if isinstance(t, RelationalTriplet) else t
            adj.add(s, o, [r])
        return adj
