"""Tokenization, task-specific input assembly and the shared encoder backends."""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import torch
from torch import Tensor, nn

from .types import Sentence, Task, Token

logger = logging.getLogger(__name__)

MAX_SEQ_LEN = 128

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP)


class Tokenizer(Protocol):
    pad_id: int
    cls_id: int
    sep_id: int

    def tokenize(self, text: str) -> list[Token]: ...

    def ids(self, tokens: Sequence[Token]) -> list[int]: ...


class WhitespaceTokenizer:
    """Splits on whitespace; ids come from a vocabulary built over a corpus."""

    _word = re.compile(r"\S+")

    def __init__(self, vocab: dict[str, int] | None = None):
        if vocab is None:
            vocab = {tok: i for i, tok in enumerate(SPECIAL_TOKENS)}
        for tok in SPECIAL_TOKENS:
            if tok not in vocab:
                raise ValueError(f"vocabulary is missing special token {tok}")
        self.vocab = vocab
        self.pad_id = vocab[PAD]
        self.unk_id = vocab[UNK]
        self.cls_id = vocab[CLS]
        self.sep_id = vocab[SEP]

    def __len__(self) -> int:
        return len(self.vocab)

    def tokenize(self, text: str) -> list[Token]:
        return [
            Token(i, m.group(), m.start(), m.end())
            for i, m in enumerate(self._word.finditer(text))
        ]

    def ids(self, tokens: Sequence[Token]) -> list[int]:
        return [self.vocab.get(t.key, self.unk_id) for t in tokens]

    @classmethod
    def build(cls, texts: Iterable[str], min_count: int = 1) -> "WhitespaceTokenizer":
        counts = Counter(w for text in texts for w in text.split())
        vocab = {tok: i for i, tok in enumerate(SPECIAL_TOKENS)}
        for word in sorted(w for w, n in counts.items() if n >= min_count):
            vocab.setdefault(word, len(vocab))
        return cls(vocab)

    def save(self, path: str | Path) -> None:
        words = sorted(self.vocab, key=self.vocab.__getitem__)
        Path(path).write_text("\n".join(words) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "WhitespaceTokenizer":
        words = Path(path).read_text(encoding="utf-8").splitlines()
        return cls({w: i for i, w in enumerate(words)})


class PretrainedTokenizer:
    """Adapter over a HuggingFace fast tokenizer (needs offset mappings)."""

    def __init__(self, hf_tokenizer):
        if not getattr(hf_tokenizer, "is_fast", False):
            raise ValueError("a fast tokenizer is required for offset mapping")
        self.hf = hf_tokenizer
        self.pad_id = hf_tokenizer.pad_token_id
        self.cls_id = hf_tokenizer.cls_token_id
        self.sep_id = hf_tokenizer.sep_token_id

    @classmethod
    def from_pretrained(cls, name_or_path: str) -> "PretrainedTokenizer":
        from transformers import AutoTokenizer

        return cls(AutoTokenizer.from_pretrained(name_or_path, use_fast=True))

    def tokenize(self, text: str) -> list[Token]:
        enc = self.hf(text, add_special_tokens=False, return_offsets_mapping=True)
        pieces = self.hf.convert_ids_to_tokens(enc["input_ids"])
        return [
            Token(i, text[a:b], a, b, piece=piece)
            for i, (piece, (a, b)) in enumerate(zip(pieces, enc["offset_mapping"]))
        ]

    def ids(self, tokens: Sequence[Token]) -> list[int]:
        return self.hf.convert_tokens_to_ids([t.key for t in tokens])


@dataclass(frozen=True)
class AssembledInput:
    """Model input for one sub-task.

    The sentence occupies the contiguous positions
    ``[sentence_start, sentence_start + sentence_length)``.
    """

    task: Task
    input_ids: tuple[int, ...]
    sentence_start: int
    sentence_length: int
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.input_ids)

    @property
    def sentence_end(self) -> int:
        return self.sentence_start + self.sentence_length

    def to_sentence_index(self, position: int) -> int:
        if not self.sentence_start <= position < self.sentence_end:
            raise IndexError(f"position {position} is outside the sentence segment")
        return position - self.sentence_start

    def to_position(self, token_index: int) -> int:
        if not 0 <= token_index < self.sentence_length:
            raise IndexError(f"token {token_index} was truncated or is out of range")
        return self.sentence_start + token_index


def _fit_segments(prefix: list[list[int]], sentence: list[int], budget: int):
    """Cut entity segments first (down to one token each), the sentence last."""
    prefix = [list(seg) for seg in prefix]
    overflow = sum(map(len, prefix)) + len(sentence) - budget
    if overflow <= 0:
        return prefix, sentence, False
    for seg in reversed(prefix):
        cut = min(overflow, len(seg) - 1)
        if cut > 0:
            del seg[len(seg) - cut :]
            overflow -= cut
    if overflow > 0:
        if overflow >= len(sentence):
            raise ValueError("max length leaves no room for the sentence")
        sentence = sentence[: len(sentence) - overflow]
    return prefix, sentence, True


def _assemble(task: Task, entities: Sequence[str], x: Sentence, tokenizer: Tokenizer,
              max_len: int) -> AssembledInput:
    if not x.tokens:
        raise ValueError(f"sentence {x.id!r} has no tokens")
    segments = []
    for ent in entities:
        ids = tokenizer.ids(tokenizer.tokenize(ent))
        if not ids:
            raise ValueError(f"empty entity string for task {task.value}")
        segments.append(ids)
    markers = len(segments) + 2
    prefix, sent_ids, truncated = _fit_segments(segments, tokenizer.ids(x.tokens), max_len - markers)
    if truncated:
        logger.warning("sentence %s truncated to %d positions for task %s", x.id, max_len, task.value)
    ids = [tokenizer.cls_id]
    for seg in prefix:
        ids += seg + [tokenizer.sep_id]
    start = len(ids)
    ids += sent_ids + [tokenizer.sep_id]
    return AssembledInput(task, tuple(ids), start, len(sent_ids), truncated)


def assemble_s(x: Sentence, tokenizer: Tokenizer, max_len: int = MAX_SEQ_LEN) -> AssembledInput:
    """``[CLS] x [SEP]``"""
    return _assemble(Task.SUBJECT, (), x, tokenizer, max_len)


def assemble_o(subject: str, x: Sentence, tokenizer: Tokenizer,
               max_len: int = MAX_SEQ_LEN) -> AssembledInput:
    """``[CLS] s [SEP] x [SEP]``"""
    return _assemble(Task.OBJECT, (subject,), x, tokenizer, max_len)


def assemble_r(subject: str, obj: str, x: Sentence, tokenizer: Tokenizer,
               max_len: int = MAX_SEQ_LEN) -> AssembledInput:
    """``[CLS] s [SEP] o [SEP] x [SEP]``"""
    return _assemble(Task.RELATION, (subject, obj), x, tokenizer, max_len)


def collate(inputs: Sequence[AssembledInput], pad_id: int) -> dict[str, Tensor]:
    """Pad a list of inputs into a batch.

    Returns ``input_ids``, ``attention_mask``, ``token_type_ids`` (always zero)
    and ``sentence_mask`` marking the extractable positions.
    """
    width = max(len(a) for a in inputs)
    ids = torch.full((len(inputs), width), pad_id, dtype=torch.long)
    attn = torch.zeros((len(inputs), width), dtype=torch.long)
    sent = torch.zeros((len(inputs), width), dtype=torch.bool)
    for i, a in enumerate(inputs):
        ids[i, : len(a)] = torch.tensor(a.input_ids, dtype=torch.long)
        attn[i, : len(a)] = 1
        sent[i, a.sentence_start : a.sentence_end] = True
    return {
        "input_ids": ids,
        "attention_mask": attn,
        "token_type_ids": torch.zeros_like(ids),
        "sentence_mask": sent,
    }


@dataclass
class EncoderOutput:
    hidden: Tensor  # (length, hidden_size)

    @property
    def cls_vector(self) -> Tensor:
        return self.hidden[0]


def sinusoidal_positions(length: int, dim: int) -> Tensor:
    pos = torch.arange(length, dtype=torch.float32).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=torch.float32) * (-math.log(10000.0) / dim))
    table = torch.zeros(length, dim)
    table[:, 0::2] = torch.sin(pos * div)
    table[:, 1::2] = torch.cos(pos * div[: dim // 2])
    return table


class ToyEncoder(nn.Module):
    """Small trainable transformer encoder for desk-scale runs."""

    def __init__(self, vocab_size: int, hidden_size: int = 128, num_layers: int = 2,
                 num_heads: int = 4, dropout: float = 0.1, max_len: int = MAX_SEQ_LEN,
                 pad_id: int = 0):
        super().__init__()
        self.hidden_size = hidden_size
        self.max_len = max_len
        self.embed = nn.Embedding(vocab_size, hidden_size, padding_idx=pad_id)
        self.register_buffer("positions", sinusoidal_positions(max_len, hidden_size), persistent=False)
        layer = nn.TransformerEncoderLayer(
            hidden_size, num_heads, dim_feedforward=4 * hidden_size, dropout=dropout,
            batch_first=True, norm_first=True,
        )
        self.layers = nn.TransformerEncoder(layer, num_layers, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(hidden_size)
        self.dropout = nn.Dropout(dropout)

    def forward(self, input_ids: Tensor, attention_mask: Tensor,
                token_type_ids: Tensor | None = None) -> Tensor:
        length = input_ids.shape[1]
        if length > self.max_len:
            raise ValueError(f"input of {length} positions exceeds encoder maximum {self.max_len}")
        h = self.embed(input_ids)
        h = self.dropout(h + self.positions[:length].to(h.dtype))
        h = self.layers(h, src_key_padding_mask=attention_mask == 0)
        return self.norm(h)


class PretrainedEncoder(nn.Module):
    """Wraps a pretrained bidirectional transformer (e.g. a cased BERT-base)."""

    def __init__(self, model: nn.Module):
        super().__init__()
        self.model = model
        self.hidden_size = model.config.hidden_size
        self.max_len = model.config.max_position_embeddings

    @classmethod
    def from_pretrained(cls, name_or_path: str) -> "PretrainedEncoder":
        from transformers import AutoModel

        return cls(AutoModel.from_pretrained(name_or_path))

    @classmethod
    def from_config(cls, config) -> "PretrainedEncoder":
        from transformers import AutoModel

        return cls(AutoModel.from_config(config))

    def forward(self, input_ids: Tensor, attention_mask: Tensor,
                token_type_ids: Tensor | None = None) -> Tensor:
        if input_ids.shape[1] > self.max_len:
            raise ValueError(f"input of {input_ids.shape[1]} positions exceeds encoder maximum {self.max_len}")
        if token_type_ids is None:
            token_type_ids = torch.zeros_like(input_ids)
        out = self.model(input_ids=input_ids, attention_mask=attention_mask,
                         token_type_ids=token_type_ids)
        return out.last_hidden_state


@torch.no_grad()
def encode(encoder: nn.Module, inp: AssembledInput, pad_id: int = 0) -> EncoderOutput:
    """Encode a single assembled input in evaluation mode."""
    was_training = encoder.training
    encoder.eval()
    try:
        batch = collate([inp], pad_id)
        hidden = encoder(batch["input_ids"], batch["attention_mask"], batch["token_type_ids"])
    finally:
        encoder.train(was_training)
    return EncoderOutput(hidden[0])
