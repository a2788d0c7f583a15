"""Cascade inference: subjects, then objects per subject, then relations per pair."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Protocol, Sequence

import torch
from torch import nn

from .corpus import Record, load_dataset
from .encoding import MAX_SEQ_LEN, AssembledInput, Tokenizer, assemble_o, assemble_r, assemble_s, collate
from .heads import (
    EXTRACTION_THRESHOLD,
    RELATION_THRESHOLD,
    SpanProbabilities,
    decode_spans,
    decode_spans_threshold,
)
from .types import AdjacencyListOutput, RelationalTriplet, RelationSchema, Sentence, Task


class Scorer(Protocol):
    """Produces head probabilities for assembled inputs.

    This is the seam between the cascade logic and the network; tests swap in
    stubs to drive each stage independently.
    """

    def span_probabilities(self, task: Task, inputs: Sequence[AssembledInput]) -> list[SpanProbabilities]: ...

    def relation_probabilities(self, inputs: Sequence[AssembledInput]) -> list[list[float]]: ...


class ModelScorer:
    def __init__(self, model: nn.Module, pad_id: int, batch_size: int = 64):
        self.model = model
        self.pad_id = pad_id
        self.batch_size = batch_size

    def _chunks(self, inputs):
        for i in range(0, len(inputs), self.batch_size):
            yield inputs[i : i + self.batch_size]

    @torch.no_grad()
    def span_probabilities(self, task, inputs):
        self.model.eval()
        out = []
        for chunk in self._chunks(inputs):
            out += self.model.span_probabilities(task, collate(chunk, self.pad_id))
        return out

    @torch.no_grad()
    def relation_probabilities(self, inputs):
        self.model.eval()
        out = []
        for chunk in self._chunks(inputs):
            out += self.model.relation_probabilities(collate(chunk, self.pad_id)).tolist()
        return out


def _dedup(items):
    return list(dict.fromkeys(items))


class Extractor:
    def __init__(self, scorer: Scorer, tokenizer: Tokenizer, schema: RelationSchema,
                 alpha: float = EXTRACTION_THRESHOLD, relation_threshold: float = RELATION_THRESHOLD,
                 threshold_decode: bool = False, max_len: int = MAX_SEQ_LEN):
        self.scorer = scorer
        self.tokenizer = tokenizer
        self.schema = schema
        self.alpha = alpha
        self.relation_threshold = relation_threshold
        self.decode = decode_spans_threshold if threshold_decode else decode_spans
        self.max_len = max_len

    @classmethod
    def from_model(cls, model: nn.Module, tokenizer: Tokenizer, schema: RelationSchema, config) -> "Extractor":
        if getattr(model, "num_relations", schema.c) != schema.c:
            raise ValueError(f"model predicts {model.num_relations} relations, schema has {schema.c}")
        return cls(ModelScorer(model, tokenizer.pad_id), tokenizer, schema, config.alpha,
                   config.relation_threshold, config.threshold_decode, config.max_len)

    def _entities(self, sentence: Sentence, inp: AssembledInput, sp: SpanProbabilities) -> list[str]:
        region = sp.sentence_region(inp.sentence_start, inp.sentence_end)
        spans = self.decode(region.p_start, region.p_end, self.alpha)
        return _dedup(sentence.span_text(s, e) for s, e in spans)

    def subjects(self, sentences: Sequence[Sentence]) -> list[list[str]]:
        inputs = [assemble_s(x, self.tokenizer, self.max_len) for x in sentences]
        probs = self.scorer.span_probabilities(Task.SUBJECT, inputs)
        return [self._entities(x, i, p) for x, i, p in zip(sentences, inputs, probs)]

    def objects(self, sentences: Sequence[Sentence], subjects: Sequence[Sequence[str]]
                ) -> list[dict[str, list[str]]]:
        jobs = [(k, s) for k, subs in enumerate(subjects) for s in subs]
        inputs = [assemble_o(s, sentences[k], self.tokenizer, self.max_len) for k, s in jobs]
        probs = self.scorer.span_probabilities(Task.OBJECT, inputs) if inputs else []
        out: list[dict[str, list[str]]] = [{} for _ in sentences]
        for (k, s), inp, p in zip(jobs, inputs, probs):
            out[k][s] = self._entities(sentences[k], inp, p)
        return out

    def relations(self, sentences: Sequence[Sentence], objects: Sequence[dict[str, list[str]]]
                  ) -> list[AdjacencyListOutput]:
        jobs = [(k, s, o) for k, objs in enumerate(objects) for s, os_ in objs.items() for o in os_]
        inputs = [assemble_r(s, o, sentences[k], self.tokenizer, self.max_len) for k, s, o in jobs]
        probs = self.scorer.relation_probabilities(inputs) if inputs else []
        out = [AdjacencyListOutput() for _ in sentences]
        for (k, s, o), p in zip(jobs, probs):
            labels = [self.schema.labels[i] for i, v in enumerate(p) if v > self.relation_threshold]
            out[k].add(s, o, labels)
        return out

    def extract_many(self, sentences: Sequence[Sentence]) -> list[AdjacencyListOutput]:
        sentences = list(sentences)
        if not sentences:
            return []
        subjects = self.subjects(sentences)
        objects = self.objects(sentences, subjects)
        return self.relations(sentences, objects)

    def extract(self, sentence: Sentence) -> AdjacencyListOutput:
        return self.extract_many([sentence])[0]

    def predict_corpus(self, corpus: Sequence[Record], chunk: int = 256) -> dict[str, set[RelationalTriplet]]:
        preds = {}
        for i in range(0, len(corpus), chunk):
            part = corpus[i : i + chunk]
            for rec, adj in zip(part, self.extract_many([r.sentence for r in part])):
                preds[rec.sentence.id] = flatten(adj)
        return preds


def extract(sentence: Sentence, extractor: Extractor) -> AdjacencyListOutput:
    return extractor.extract(sentence)


def flatten(adj: AdjacencyListOutput) -> set[RelationalTriplet]:
    return {
        RelationalTriplet(s, r, o)
        for s, objs in adj.entries.items()
        for o, rels in objs.items()
        for r in rels
    }


def prediction_record(sid: str, adj: AdjacencyListOutput) -> dict:
    return {
        "id": sid,
        "adjacency": adj.to_json(),
        "triples": sorted(list(t.as_tuple()) for t in flatten(adj)),
    }


def predict_file(corpus_path: str | Path, checkpoint_path: str | Path, output_path: str | Path,
                 chunk: int = 256) -> int:
    """Run cascade extraction over a corpus file; returns the number of sentences written."""
    from .checkpoint import load_checkpoint

    ckpt = load_checkpoint(checkpoint_path)
    corpus = load_dataset(corpus_path, None, ckpt.tokenizer)
    extractor = Extractor.from_model(ckpt.model, ckpt.tokenizer, ckpt.schema, ckpt.config)
    with open(output_path, "w", encoding="utf-8") as fh:
        for i in range(0, len(corpus), chunk):
            part = corpus[i : i + chunk]
            for rec, adj in zip(part, extractor.extract_many([r.sentence for r in part])):
                fh.write(json.dumps(prediction_record(rec.sentence.id, adj), ensure_ascii=False) + "\n")
    return len(corpus)


def read_predictions(path: str | Path) -> dict[str, set[RelationalTriplet]]:
    preds = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                preds[rec["id"]] = {RelationalTriplet(*t) for t in rec["triples"]}
    return preds
