"""Micro precision/recall/F1 under partial (head-token) and exact matching."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .corpus import N_BUCKETS, Record, classify_overlap, n_bucket
from .types import RelationalTriplet

REPORT_VERSION = 1
MODES = ("partial", "exact")


def head(entity: str) -> str:
    parts = entity.split()
    return parts[0] if parts else ""


def match_partial(pred: RelationalTriplet, gold: RelationalTriplet) -> bool:
    return (pred.relation == gold.relation
            and head(pred.subject) == head(gold.subject)
            and head(pred.object) == head(gold.object))


def match_exact(pred: RelationalTriplet, gold: RelationalTriplet) -> bool:
    return pred.as_tuple() == gold.as_tuple()


def _key(t: RelationalTriplet, mode: str) -> tuple[str, str, str]:
    if mode == "partial":
        return (head(t.subject), t.relation, head(t.object))
    return t.as_tuple()


@dataclass
class PRF:
    matched: int = 0
    predicted: int = 0
    gold: int = 0

    def add(self, matched: int, predicted: int, gold: int) -> None:
        self.matched += matched
        self.predicted += predicted
        self.gold += gold

    @property
    def precision(self) -> float:
        return self.matched / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return self.matched / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def to_json(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "matched": self.matched, "predicted": self.predicted, "gold": self.gold}


def count_matches(pred: Iterable[RelationalTriplet], gold: Iterable[RelationalTriplet],
                  mode: str = "partial") -> tuple[int, int, int]:
    """(matched, predicted, gold) for one sentence.

    Both match rules are equivalences on a key, so the maximum one-to-one
    matching is the per-key minimum of the two multiplicities.
    """
    if mode not in MODES:
        raise ValueError(f"unknown match mode {mode!r}")
    pred, gold = set(pred), set(gold)
    pk = Counter(_key(t, mode) for t in pred)
    gk = Counter(_key(t, mode) for t in gold)
    matched = sum(min(n, gk[k]) for k, n in pk.items())
    return matched, len(pred), len(gold)


def _element_sets(triples: Iterable[RelationalTriplet], mode: str):
    norm = head if mode == "partial" else (lambda e: e)
    triples = list(triples)
    return {
        "s": {norm(t.subject) for t in triples},
        "o": {norm(t.object) for t in triples},
        "r": {(norm(t.subject), norm(t.object), t.relation) for t in triples},
    }


@dataclass
class EvalReport:
    mode: str
    overall: PRF = field(default_factory=PRF)
    elements: dict[str, PRF] = field(default_factory=lambda: {k: PRF() for k in "sor"})
    patterns: dict[str, PRF] = field(default_factory=lambda: {k: PRF() for k in ("Normal", "EPO", "SEO")})
    by_n: dict[str, PRF] = field(default_factory=lambda: {k: PRF() for k in N_BUCKETS})
    sentences: int = 0

    @property
    def precision(self) -> float:
        return self.overall.precision

    @property
    def recall(self) -> float:
        return self.overall.recall

    @property
    def f1(self) -> float:
        return self.overall.f1

    def to_json(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "mode": self.mode,
            "sentences": self.sentences,
            "overall": self.overall.to_json(),
            "elements": {k: v.to_json() for k, v in self.elements.items()},
            "patterns": {k: v.to_json() for k, v in self.patterns.items()},
            "by_n": {k: v.to_json() for k, v in self.by_n.items()},
        }

    def format_table(self) -> str:
        lines = [f"mode: {self.mode}   sentences: {self.sentences}",
                 f"{'':<10}{'Prec.':>8}{'Rec.':>8}{'F1':>8}{'gold':>8}"]

        def row(name, prf):
            lines.append(f"{name:<10}{100 * prf.precision:>8.1f}{100 * prf.recall:>8.1f}"
                         f"{100 * prf.f1:>8.1f}{prf.gold:>8d}")

        row("ALL", self.overall)
        for name, prf in self.elements.items():
            row(f"elem {name}", prf)
        for name, prf in self.patterns.items():
            row(name, prf)
        for name, prf in self.by_n.items():
            row(f"N={name}" if name[0].isdigit() else f"N{name}", prf)
        return "\n".join(lines)

    def by_n_csv(self) -> str:
        """Per-N F1 with sentence counts, laid out as one row per statistic."""
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["", *self.by_n])
        writer.writerow(["gold_triplets", *(p.gold for p in self.by_n.values())])
        writer.writerow(["f1", *(f"{100 * p.f1:.1f}" for p in self.by_n.values())])
        return buf.getvalue()


class EvaluationError(ValueError):
    pass


def _gold_map(gold) -> dict[str, list[RelationalTriplet]]:
    if isinstance(gold, Mapping):
        return {k: list(v) for k, v in gold.items()}
    return {rec.sentence.id: list(rec.triples) for rec in gold}


def score(predictions: Mapping[str, Iterable[RelationalTriplet]],
          gold: Mapping[str, Sequence[RelationalTriplet]] | Sequence[Record],
          mode: str = "partial") -> EvalReport:
    if mode not in MODES:
        raise ValueError(f"unknown match mode {mode!r}")
    gold = _gold_map(gold)
    missing = sorted(set(gold) - set(predictions))
    extra = sorted(set(predictions) - set(gold))
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"missing predictions for ids: {', '.join(missing[:20])}")
        if extra:
            parts.append(f"predictions for unknown ids: {', '.join(extra[:20])}")
        raise EvaluationError("; ".join(parts))

    report = EvalReport(mode)
    for sid, gold_triples in gold.items():
        pred = set(predictions[sid])
        counts = count_matches(pred, gold_triples, mode)
        report.overall.add(*counts)
        report.sentences += 1

        ps, gs = _element_sets(pred, mode), _element_sets(gold_triples, mode)
        for k in "sor":
            report.elements[k].add(len(ps[k] & gs[k]), len(ps[k]), len(gs[k]))

        if gold_triples:
            flags = classify_overlap(gold_triples)
            for name, on in (("Normal", flags.normal), ("EPO", flags.epo), ("SEO", flags.seo)):
                if on:
                    report.patterns[name].add(*counts)
        bucket = n_bucket(len(gold_triples))
        report.by_n.setdefault(bucket, PRF()).add(*counts)
    return report
