"""Span and relation output layers, span decoding and the BCE losses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .types import Span, Task

EXTRACTION_THRESHOLD = 0.9
RELATION_THRESHOLD = 0.5
_EPS = 1e-12


@dataclass
class SpanHeadParams:
    w_start: Tensor  # (hidden,)
    b_start: Tensor  # ()
    w_end: Tensor
    b_end: Tensor

    @classmethod
    def from_linear(cls, layer: nn.Linear) -> "SpanHeadParams":
        return cls(layer.weight[0], layer.bias[0], layer.weight[1], layer.bias[1])


@dataclass
class SpanProbabilities:
    p_start: Tensor  # (length,)
    p_end: Tensor

    def sentence_region(self, start: int, end: int) -> "SpanProbabilities":
        return SpanProbabilities(self.p_start[start:end], self.p_end[start:end])


def span_probabilities(hidden: Tensor, sentence_mask: Tensor, params: SpanHeadParams) -> SpanProbabilities:
    """Independent per-position start/end sigmoids; positions outside the sentence are 0."""
    if hidden.shape[-1] != params.w_start.shape[-1]:
        raise ValueError(f"hidden size {hidden.shape[-1]} does not match head size "
                         f"{params.w_start.shape[-1]}")
    if hidden.shape[:-1] != sentence_mask.shape:
        raise ValueError("sentence mask shape does not match hidden states")
    mask = sentence_mask.to(hidden.dtype)
    p_start = torch.sigmoid(hidden @ params.w_start + params.b_start) * mask
    p_end = torch.sigmoid(hidden @ params.w_end + params.b_end) * mask
    return SpanProbabilities(p_start, p_end)


def relation_probabilities(cls_vector: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Multi-label relation probabilities from the ``[CLS]`` vector.

    ``weight`` has the ``nn.Linear`` layout ``(c, hidden)``.
    """
    if cls_vector.shape[-1] != weight.shape[-1]:
        raise ValueError(f"hidden size {cls_vector.shape[-1]} does not match head size {weight.shape[-1]}")
    return torch.sigmoid(cls_vector @ weight.T + bias)


def predicted_relations(p: Sequence[float] | Tensor, threshold: float = RELATION_THRESHOLD) -> list[int]:
    return [i for i, v in enumerate(_as_list(p)) if v > threshold]


def _as_list(p) -> list[float]:
    if isinstance(p, Tensor):
        return p.detach().cpu().tolist()
    return list(p)


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {alpha}")


def decode_spans(p_start, p_end, alpha: float = EXTRACTION_THRESHOLD) -> list[Span]:
    """Pointer-style decoding.

    Starts are the positions with ``p_start > alpha``; each start takes the
    ``p_end`` argmax between itself and the next start (the last one scans to
    the end). Ties go to the smallest index.
    """
    _check_alpha(alpha)
    ps, pe = _as_list(p_start), _as_list(p_end)
    starts = [i for i, v in enumerate(ps) if v > alpha]
    bounds = starts[1:] + [len(pe)]
    spans = []
    for start, stop in zip(starts, bounds):
        best = start
        for i in range(start + 1, stop):
            if pe[i] > pe[best]:
                best = i
        spans.append((start, best))
    return spans


def decode_spans_threshold(p_start, p_end, alpha: float = EXTRACTION_THRESHOLD) -> list[Span]:
    """Threshold both ends and pair each start with the nearest end at or after it."""
    _check_alpha(alpha)
    ps, pe = _as_list(p_start), _as_list(p_end)
    ends = [i for i, v in enumerate(pe) if v > alpha]
    spans = []
    for start in (i for i, v in enumerate(ps) if v > alpha):
        end = next((e for e in ends if e >= start), None)
        if end is not None:
            spans.append((start, end))
    return spans


def bce_loss(predictions: Tensor, targets: Tensor, mask: Tensor | None = None,
             reduction: str = "mean") -> Tensor:
    """Binary cross entropy over probabilities; ``mask`` selects the scored positions."""
    if predictions.shape != targets.shape:
        raise ValueError(f"prediction shape {tuple(predictions.shape)} != target shape {tuple(targets.shape)}")
    eps = max(_EPS, torch.finfo(predictions.dtype).eps)
    p = predictions.clamp(eps, 1 - eps)
    t = targets.to(p.dtype)
    loss = -(t * torch.log(p) + (1 - t) * torch.log1p(-p))
    return _reduce(loss, mask, reduction)


def bce_with_logits(logits: Tensor, targets: Tensor, mask: Tensor | None = None,
                    reduction: str = "mean") -> Tensor:
    """Same quantity as :func:`bce_loss`, computed from logits for stability."""
    if logits.shape != targets.shape:
        raise ValueError(f"logit shape {tuple(logits.shape)} != target shape {tuple(targets.shape)}")
    loss = F.binary_cross_entropy_with_logits(logits, targets.to(logits.dtype), reduction="none")
    return _reduce(loss, mask, reduction)


def _reduce(loss: Tensor, mask: Tensor | None, reduction: str) -> Tensor:
    if mask is not None:
        mask = mask.to(loss.dtype)
        loss = loss * mask
        count = mask.sum()
    else:
        count = torch.tensor(float(loss.numel()), dtype=loss.dtype)
    if reduction == "sum":
        return loss.sum()
    if reduction == "mean":
        return loss.sum() / count.clamp_min(1)
    raise ValueError(f"unknown reduction {reduction!r}")


class DirectModel(nn.Module):
    """Shared encoder with subject, object and relation output layers.

    With ``shared_heads`` the subject and object layers are the same module.
    """

    def __init__(self, encoder: nn.Module, num_relations: int, shared_heads: bool = False):
        super().__init__()
        hidden = encoder.hidden_size
        self.encoder = encoder
        self.num_relations = num_relations
        self.shared_heads = shared_heads
        self.subject_head = nn.Linear(hidden, 2)
        self.object_head = self.subject_head if shared_heads else nn.Linear(hidden, 2)
        self.relation_head = nn.Linear(hidden, num_relations)

    def head(self, task: Task) -> nn.Linear:
        return {Task.SUBJECT: self.subject_head, Task.OBJECT: self.object_head,
                Task.RELATION: self.relation_head}[Task(task)]

    def head_parameters(self, task: Task) -> list[nn.Parameter]:
        return list(self.head(task).parameters())

    def encode(self, batch: dict[str, Tensor]) -> Tensor:
        return self.encoder(batch["input_ids"], batch["attention_mask"], batch.get("token_type_ids"))

    def span_logits(self, task: Task, batch: dict[str, Tensor]) -> Tensor:
        """(batch, length, 2) start/end logits."""
        if Task(task) is Task.RELATION:
            raise ValueError("span logits are only defined for subject/object tasks")
        return self.head(task)(self.encode(batch))

    def relation_logits(self, batch: dict[str, Tensor]) -> Tensor:
        return self.relation_head(self.encode(batch)[:, 0])

    def span_probabilities(self, task: Task, batch: dict[str, Tensor]) -> list[SpanProbabilities]:
        hidden = self.encode(batch)
        params = SpanHeadParams.from_linear(self.head(task))
        out = []
        for h, m in zip(hidden, batch["sentence_mask"]):
            out.append(span_probabilities(h, m, params))
        return out

    def relation_probabilities(self, batch: dict[str, Tensor]) -> Tensor:
        hidden = self.encode(batch)
        return relation_probabilities(hidden[:, 0], self.relation_head.weight, self.relation_head.bias)

    def loss(self, task: Task, batch: dict[str, Tensor]) -> Tensor:
        """Per-example losses, shape (batch,).

        Span tasks average BCE over the start and end bits of the sentence
        positions; the relation task averages over the relation labels.
        """
        task = Task(task)
        if task is Task.RELATION:
            logits = self.relation_logits(batch)
            raw = F.binary_cross_entropy_with_logits(logits, batch["relation_target"].to(logits.dtype),
                                                     reduction="none")
            return raw.mean(dim=1)
        logits = self.span_logits(task, batch)
        targets = torch.stack([batch["start_target"], batch["end_target"]], dim=-1).to(logits.dtype)
        raw = F.binary_cross_entropy_with_logits(logits, targets, reduction="none")
        mask = batch["sentence_mask"].to(logits.dtype)
        return (raw * mask.unsqueeze(-1)).sum(dim=(1, 2)) / (2 * mask.sum(dim=1)).clamp_min(1)
