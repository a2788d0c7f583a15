"""Corpus ingestion, overlap classification and sub-task example derivation."""

from __future__ import annotations

import itertools
import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .encoding import (
    MAX_SEQ_LEN,
    AssembledInput,
    Tokenizer,
    WhitespaceTokenizer,
    assemble_o,
    assemble_r,
    assemble_s,
)
from .types import OverlapFlags, RelationalTriplet, RelationSchema, Sentence, Span, Task, Token

logger = logging.getLogger(__name__)

CORPUS_FORMAT = "direct-re-corpus"
CORPUS_VERSION = 1

_TEXT_KEYS = ("text", "sentText", "sentence")
_TRIPLE_KEYS = ("triple_list", "triples", "spo_list")


class CorpusError(ValueError):
    """Raised for malformed corpus files; ``index`` is the offending record."""

    def __init__(self, message: str, index: int | None = None):
        if index is not None:
            message = f"record {index}: {message}"
        super().__init__(message)
        self.index = index


class Record(NamedTuple):
    sentence: Sentence
    triples: list[RelationalTriplet]


@dataclass(frozen=True)
class SubtaskExample:
    task: Task
    input: AssembledInput
    start_target: tuple[int, ...] | None = None
    end_target: tuple[int, ...] | None = None
    relation_target: tuple[int, ...] | None = None


def find_spans(tokens: Sequence[Token], entity: Sequence[Token]) -> list[Span]:
    """Every exact token-subsequence match of ``entity`` in ``tokens``."""
    n, m = len(tokens), len(entity)
    if m == 0:
        return []
    keys = [t.key for t in tokens]
    target = [t.key for t in entity]
    return [(i, i + m - 1) for i in range(n - m + 1) if keys[i : i + m] == target]


def make_record(sid: str, text: str, triples: Iterable[Sequence[str]],
                tokenizer: Tokenizer | None = None) -> Record:
    tokenizer = tokenizer or WhitespaceTokenizer()
    sentence = Sentence(sid, text, tuple(tokenizer.tokenize(text)))
    aligned = []
    for s, r, o in triples:
        s_spans = find_spans(sentence.tokens, tokenizer.tokenize(s))
        o_spans = find_spans(sentence.tokens, tokenizer.tokenize(o))
        aligned.append(RelationalTriplet(
            s, r, o,
            s_spans[0] if s_spans else None,
            o_spans[0] if o_spans else None,
        ))
    return Record(sentence, aligned)


def retokenize(corpus: Sequence[Record], tokenizer: Tokenizer) -> list[Record]:
    return [
        make_record(rec.sentence.id, rec.sentence.text, [t.as_tuple() for t in rec.triples], tokenizer)
        for rec in corpus
    ]


def load_schema(path: str | Path) -> RelationSchema:
    """Read relation labels from a JSON list, a ``{label: id}`` map, or ``[id2rel, rel2id]``."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, list) and len(data) == 2 and all(isinstance(d, dict) for d in data):
        data = data[1]
    if isinstance(data, dict):
        if "labels" in data:
            return RelationSchema(tuple(data["labels"]))
        return RelationSchema(tuple(sorted(data, key=lambda k: int(data[k]))))
    if isinstance(data, list):
        return RelationSchema(tuple(data))
    raise CorpusError(f"unrecognised schema format in {path}")


def _read_raw(path: Path) -> tuple[dict | None, list]:
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        return None, []
    stripped = text.lstrip()
    if stripped.startswith("["):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"invalid JSON: {exc}") from exc
        return None, data
    records = []
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise CorpusError(f"invalid JSON line: {exc}", len(records)) from exc
    header = None
    if records and isinstance(records[0], dict) and records[0].get("format") == CORPUS_FORMAT:
        header = records.pop(0)
    return header, records


def _parse_record(i: int, raw, default_id: str) -> tuple[str, str, list[tuple[str, str, str]]]:
    if not isinstance(raw, dict):
        raise CorpusError("expected a JSON object", i)
    text = next((raw[k] for k in _TEXT_KEYS if k in raw), None)
    if not isinstance(text, str):
        raise CorpusError("missing sentence text", i)
    triples_raw = next((raw[k] for k in _TRIPLE_KEYS if k in raw), None)
    if not isinstance(triples_raw, list):
        raise CorpusError("missing triple list", i)
    triples = []
    for t in triples_raw:
        if isinstance(t, dict):
            t = [t.get("subject"), t.get("relation"), t.get("object")]
        if not (isinstance(t, (list, tuple)) and len(t) == 3 and all(isinstance(e, str) for e in t)):
            raise CorpusError(f"malformed triple {t!r}", i)
        triples.append(tuple(t))
    return str(raw.get("id", default_id)), text, triples


def load_dataset(path: str | Path, schema: RelationSchema | None = None,
                 tokenizer: Tokenizer | None = None) -> list[Record]:
    """Load a release-format or canonical corpus file.

    When ``schema`` is omitted it is taken from the canonical header; raw release
    files then require one.
    """
    path = Path(path)
    header, raws = _read_raw(path)
    if schema is None and header is not None:
        schema = RelationSchema(tuple(header["schema"]))
    corpus = []
    for i, raw in enumerate(raws):
        sid, text, triples = _parse_record(i, raw, str(i))
        if schema is not None:
            for _, r, _ in triples:
                if r not in schema:
                    raise CorpusError(f"unknown relation label {r!r}", i)
        corpus.append(make_record(sid, text, triples, tokenizer))
    unaligned = count_unaligned(corpus)
    if unaligned:
        logger.warning("%s: %d triplets could not be aligned to tokens and are excluded "
                       "from training targets", path, unaligned)
    return corpus


def read_schema_header(path: str | Path) -> RelationSchema | None:
    header, _ = _read_raw(Path(path))
    return RelationSchema(tuple(header["schema"])) if header else None


def count_unaligned(corpus: Iterable[Record]) -> int:
    return sum(not t.aligned for rec in corpus for t in rec.triples)


def infer_schema(corpus: Iterable[Record]) -> RelationSchema:
    return RelationSchema(tuple(sorted({t.relation for rec in corpus for t in rec.triples})))


def save_corpus(corpus: Sequence[Record], schema: RelationSchema, path: str | Path) -> None:
    """Write the canonical JSON-lines format: a header line, then one sentence per line."""
    lines = [json.dumps({"format": CORPUS_FORMAT, "version": CORPUS_VERSION,
                         "schema": list(schema.labels)}, ensure_ascii=False)]
    for rec in corpus:
        lines.append(json.dumps({
            "id": rec.sentence.id,
            "text": rec.sentence.text,
            "triples": [list(t.as_tuple()) for t in rec.triples],
        }, ensure_ascii=False))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def classify_overlap(triples: Sequence[RelationalTriplet]) -> OverlapFlags:
    distinct = list(dict.fromkeys(t.as_tuple() for t in triples))
    if not distinct:
        logger.warning("classify_overlap called with no triplets")
        return OverlapFlags(normal=False, epo=False, seo=False)
    epo = seo = False
    for (s1, _, o1), (s2, _, o2) in itertools.combinations(distinct, 2):
        shared = len({s1, o1} & {s2, o2})
        if {s1, o1} == {s2, o2}:
            epo = True
        elif shared == 1:
            seo = True
    return OverlapFlags(normal=not (epo or seo), epo=epo, seo=seo)


def _target(length: int, positions: Iterable[int]) -> tuple[int, ...]:
    bits = [0] * length
    for p in positions:
        bits[p] = 1
    return tuple(bits)


def _span_bits(inp: AssembledInput, spans: Iterable[Span]):
    starts, ends = [], []
    for s, e in spans:
        # spans cut by truncation cannot be targeted
        if e < inp.sentence_length:
            starts.append(inp.to_position(s))
            ends.append(inp.to_position(e))
    return _target(len(inp), starts), _target(len(inp), ends)


def derive_subtask_examples(sentence: Sentence, gold: Sequence[RelationalTriplet],
                            schema: RelationSchema, tokenizer: Tokenizer,
                            max_len: int = MAX_SEQ_LEN) -> list[SubtaskExample]:
    """Training instances for the three sub-tasks of one sentence.

    One subject example, one object example per distinct subject and one
    relation example per distinct (subject, object) pair. Entities are
    targeted at every position where their tokens occur.
    """
    usable = [t for t in dict.fromkeys(gold) if t.aligned]

    def spans_of(entity: str) -> list[Span]:
        return find_spans(sentence.tokens, tokenizer.tokenize(entity))

    subjects = list(dict.fromkeys(t.subject for t in usable))
    s_input = assemble_s(sentence, tokenizer, max_len)
    starts, ends = _span_bits(s_input, (sp for s in subjects for sp in spans_of(s)))
    examples = [SubtaskExample(Task.SUBJECT, s_input, starts, ends)]

    for subject in subjects:
        objects = list(dict.fromkeys(t.object for t in usable if t.subject == subject))
        o_input = assemble_o(subject, sentence, tokenizer, max_len)
        starts, ends = _span_bits(o_input, (sp for o in objects for sp in spans_of(o)))
        examples.append(SubtaskExample(Task.OBJECT, o_input, starts, ends))

    pairs: dict[tuple[str, str], set[int]] = {}
    for t in usable:
        pairs.setdefault((t.subject, t.object), set()).add(schema.index(t.relation))
    for (subject, obj), rels in pairs.items():
        r_input = assemble_r(subject, obj, sentence, tokenizer, max_len)
        examples.append(SubtaskExample(Task.RELATION, r_input,
                                       relation_target=_target(schema.c, rels)))
    return examples


def derive_corpus_examples(corpus: Iterable[Record], schema: RelationSchema,
                           tokenizer: Tokenizer, max_len: int = MAX_SEQ_LEN
                           ) -> dict[Task, list[SubtaskExample]]:
    by_task: dict[Task, list[SubtaskExample]] = {t: [] for t in Task}
    for rec in corpus:
        for ex in derive_subtask_examples(rec.sentence, rec.triples, schema, tokenizer, max_len):
            by_task[ex.task].append(ex)
    return by_task


N_BUCKETS = ("1", "2", "3", "4", ">=5")


def n_bucket(num_triples: int) -> str:
    if num_triples <= 0:
        return "0"
    return str(num_triples) if num_triples < 5 else ">=5"


def corpus_stats(corpus: Sequence[Record]) -> dict:
    overlap = Counter()
    buckets = Counter({b: 0 for b in N_BUCKETS})
    for rec in corpus:
        flags = classify_overlap(rec.triples) if rec.triples else None
        if flags is not None:
            overlap["Normal"] += flags.normal
            overlap["EPO"] += flags.epo
            overlap["SEO"] += flags.seo
        buckets[n_bucket(len(rec.triples))] += 1
    return {
        "overlap": {"Normal": overlap["Normal"], "EPO": overlap["EPO"],
                    "SEO": overlap["SEO"], "ALL": len(corpus)},
        "triplet_count": dict(buckets),
        "triplets": sum(len(rec.triples) for rec in corpus),
        "unaligned_triplets": count_unaligned(corpus),
    }


def format_stats(stats: dict) -> str:
    rows = [("Category", "Sentences")]
    rows += [(k, str(v)) for k, v in stats["overlap"].items()]
    rows += [("", "")]
    rows += [(f"N={k}" if k[0].isdigit() else f"N{k}", str(v))
             for k, v in stats["triplet_count"].items()]
    width = max(len(a) for a, _ in rows)
    return "\n".join(f"{a:<{width}}  {b:>9}" for a, b in rows)
