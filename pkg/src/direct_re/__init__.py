"""Adjacency-list oriented relational triple extraction."""

from .types import (
    AdjacencyListOutput,
    OverlapFlags,
    RelationalTriplet,
    RelationSchema,
    Sentence,
    Task,
    Token,
)

__all__ = [
    "AdjacencyListOutput",
    "OverlapFlags",
    "RelationSchema",
    "RelationalTriplet",
    "Sentence",
    "Task",
    "Token",
]

__version__ = "0.1.0"
