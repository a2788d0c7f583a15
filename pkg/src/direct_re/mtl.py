"""Adaptive multi-task training with EMA-based dynamic loss balancing."""

from __future__ import annotations

import copy
import dataclasses
import json
import logging
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import torch
from torch import Tensor, nn

from .corpus import Record, SubtaskExample, derive_corpus_examples, infer_schema, retokenize
from .encoding import MAX_SEQ_LEN, PretrainedTokenizer, Tokenizer, WhitespaceTokenizer, collate
from .types import RelationSchema, Task

logger = logging.getLogger(__name__)

TASKS = (Task.SUBJECT, Task.OBJECT, Task.RELATION)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    alpha: float = 0.9
    relation_threshold: float = 0.5
    lr: float = 8e-5
    batch_size: int = 32
    epochs: int = 15
    ema_decay: float = 0.99
    seed: int = 42
    warmup_fraction: float = 0.1
    max_len: int = MAX_SEQ_LEN
    grad_clip: float | None = None
    # ablations
    shared_heads: bool = False
    equal_weights: bool = False
    threshold_decode: bool = False
    plain_optimizer: bool = False
    # encoder
    backend: str = "toy"
    pretrained: str | None = None
    hidden_size: int = 128
    num_layers: int = 2
    num_heads: int = 4
    dropout: float = 0.1
    # validation / stopping
    eval_every: int = 1
    stop_at_f1: float | None = None

    def __post_init__(self) -> None:
        for name in ("alpha", "relation_threshold"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not 0 <= self.ema_decay < 1:
            raise ValueError(f"ema_decay must lie in [0, 1), got {self.ema_decay}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 <= self.warmup_fraction < 1:
            raise ValueError(f"warmup_fraction must lie in [0, 1), got {self.warmup_fraction}")
        if self.backend not in ("toy", "pretrained"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "pretrained" and not self.pretrained:
            raise ValueError("backend 'pretrained' needs the 'pretrained' model path")

    @classmethod
    def from_dict(cls, data: Mapping) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# Hyper-parameters reported for the two benchmarks (pretrained encoder).
NYT_DEFAULTS = dict(lr=8e-5, epochs=15, batch_size=32)
WEBNLG_DEFAULTS = dict(lr=1e-4, epochs=60, batch_size=16)


@dataclass(frozen=True)
class EmaState:
    v: Mapping[Task, float]
    n: Mapping[Task, int]
    decay: float = 0.99

    @classmethod
    def initial(cls, n: Mapping[Task, int], decay: float = 0.99) -> "EmaState":
        for task, count in n.items():
            if count < 1:
                raise ValueError(f"task {Task(task).value} has no batches")
        return cls({t: 1.0 for t in n}, dict(n), decay)


def update_ema(state: EmaState, task: Task, loss_sum: float) -> EmaState:
    """``v_t <- (1 - decay) * loss_sum + decay * v_t``; other tasks are untouched."""
    if not math.isfinite(loss_sum):
        raise TrainingError(f"non-finite loss sum {loss_sum} for task {Task(task).value}")
    if loss_sum < 0:
        raise ValueError(f"loss sum must be non-negative, got {loss_sum}")
    v = dict(state.v)
    v[task] = (1 - state.decay) * loss_sum + state.decay * v[task]
    return dataclasses.replace(state, v=v)


def task_weight(state: EmaState, task: Task, equal_weights: bool = False) -> float:
    """Per-batch-normalised EMA of ``task`` relative to the relation task."""
    if equal_weights:
        return 1.0
    r = Task.RELATION
    return (state.v[task] / state.n[task]) / (state.v[r] / state.n[r])


@dataclass
class BatchSchedule:
    batches: list[tuple[Task, list[SubtaskExample]]]
    n: dict[Task, int]

    def __len__(self) -> int:
        return len(self.batches)

    def __iter__(self):
        return iter(self.batches)


def pack(examples: Sequence, batch_size: int) -> list[list]:
    return [list(examples[i : i + batch_size]) for i in range(0, len(examples), batch_size)]


def build_schedule(examples: Mapping[Task, Sequence[SubtaskExample]], batch_size: int,
                   seed: int) -> BatchSchedule:
    """Pack each task into mini-batches (keeping the short tail) and shuffle the union."""
    batches, n = [], {}
    for task in TASKS:
        items = examples.get(task, [])
        if not items:
            raise ValueError(f"task {task.value!r} has no training examples")
        packed = pack(items, batch_size)
        n[task] = len(packed)
        batches += [(task, b) for b in packed]
    random.Random(seed).shuffle(batches)
    return BatchSchedule(batches, n)


def make_batch(task: Task, examples: Sequence[SubtaskExample], pad_id: int) -> dict[str, Tensor]:
    batch = collate([ex.input for ex in examples], pad_id)
    width = batch["input_ids"].shape[1]
    if task is Task.RELATION:
        batch["relation_target"] = torch.tensor([ex.relation_target for ex in examples], dtype=torch.float32)
    else:
        for key in ("start_target", "end_target"):
            t = torch.zeros((len(examples), width))
            for i, ex in enumerate(examples):
                t[i, : len(ex.input)] = torch.tensor(getattr(ex, key), dtype=torch.float32)
            batch[key] = t
    return batch


def triangular_lr(step: int, total_steps: int, peak: float, warmup_fraction: float = 0.1) -> float:
    """Linear warm-up to ``peak`` then linear decay to zero."""
    warmup = int(total_steps * warmup_fraction)
    if warmup > 0 and step < warmup:
        return peak * (step + 1) / warmup
    remaining = max(total_steps - warmup, 1)
    return peak * max(0.0, (total_steps - step) / remaining)


def set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def train_step(model: nn.Module, optimizer: torch.optim.Optimizer, task: Task,
               batch: Mapping[str, Tensor], state: EmaState, config: TrainConfig,
               batch_id: int = 0) -> tuple[EmaState, dict]:
    """One update on a single-task batch.

    The EMA sees the summed per-example loss, the gradient comes from the
    weighted mean. Heads of other tasks get no gradient, so the optimizer skips
    them entirely unless ``plain_optimizer`` asks for zero-gradient steps.
    """
    model.train()
    optimizer.zero_grad(set_to_none=True)
    losses = model.loss(task, batch)
    loss_sum = losses.sum()
    loss_mean = losses.mean()
    state = update_ema(state, task, float(loss_sum.detach()))
    weight = task_weight(state, task, config.equal_weights)
    (weight * loss_mean).backward()

    params = [p for p in model.parameters() if p.requires_grad]
    for p in params:
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise TrainingError(f"non-finite gradient in batch {batch_id} (task {task.value})")
    if config.plain_optimizer:
        for p in params:
            if p.grad is None:
                p.grad = torch.zeros_like(p)
    if config.grad_clip:
        nn.utils.clip_grad_norm_([p for p in params if p.grad is not None], config.grad_clip)
    optimizer.step()
    record = {
        "step": batch_id,
        "task": task.value,
        "loss_sum": float(loss_sum.detach()),
        "loss_mean": float(loss_mean.detach()),
        "weight": weight,
        "lr": optimizer.param_groups[0]["lr"],
    }
    return state, record


def seed_everything(seed: int) -> None:
    random.seed(seed)
    torch.manual_seed(seed)


def build_tokenizer(config: TrainConfig, corpus: Iterable[Record]) -> Tokenizer:
    if config.backend == "pretrained":
        return PretrainedTokenizer.from_pretrained(config.pretrained)
    texts = []
    for rec in corpus:
        texts.append(rec.sentence.text)
        texts += [e for t in rec.triples for e in (t.subject, t.object)]
    return WhitespaceTokenizer.build(texts)


def build_model(config: TrainConfig, tokenizer: Tokenizer, schema: RelationSchema) -> nn.Module:
    from .encoding import PretrainedEncoder, ToyEncoder
    from .heads import DirectModel

    if config.backend == "pretrained":
        encoder = PretrainedEncoder.from_pretrained(config.pretrained)
    else:
        encoder = ToyEncoder(len(tokenizer.vocab), config.hidden_size, config.num_layers,
                             config.num_heads, config.dropout, config.max_len, tokenizer.pad_id)
    return DirectModel(encoder, schema.c, shared_heads=config.shared_heads)


@dataclass
class TrainResult:
    model: nn.Module
    tokenizer: Tokenizer
    schema: RelationSchema
    config: TrainConfig
    log: list[dict] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)
    best_f1: float = -1.0
    best_epoch: int = 0


def train(corpus: Sequence[Record], config: TrainConfig, schema: RelationSchema | None = None,
          dev: Sequence[Record] | None = None, tokenizer: Tokenizer | None = None,
          model: nn.Module | None = None, log_path: str | Path | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Train the shared encoder and heads, keeping the best model on ``dev``.

    Without a dev set the training corpus itself is used for model selection.
    """
    from .evaluation import score
    from .pipeline import Extractor

    seed_everything(config.seed)
    schema = schema or infer_schema(corpus)
    tokenizer = tokenizer or build_tokenizer(config, corpus)
    if config.backend == "pretrained":
        corpus = retokenize(corpus, tokenizer)
        dev = retokenize(dev, tokenizer) if dev is not None else None
    dev = corpus if dev is None else dev
    model = model or build_model(config, tokenizer, schema)

    examples = derive_corpus_examples(corpus, schema, tokenizer, config.max_len)
    schedule_len = len(build_schedule(examples, config.batch_size, config.seed))
    total_steps = schedule_len * config.epochs
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)

    result = TrainResult(model, tokenizer, schema, config)
    best_state = None
    log_file = open(log_path, "w", encoding="utf-8") if log_path else None
    step = 0
    try:
        for epoch in range(1, config.epochs + 1):
            started = time.perf_counter()
            schedule = build_schedule(examples, config.batch_size, config.seed + epoch)
            state = EmaState.initial(schedule.n, config.ema_decay)
            for task, items in schedule:
                set_lr(optimizer, triangular_lr(step, total_steps, config.lr, config.warmup_fraction))
                batch = make_batch(task, items, tokenizer.pad_id)
                state, record = train_step(model, optimizer, task, batch, state, config, step)
                record["epoch"] = epoch
                result.log.append(record)
                if log_file:
                    log_file.write(json.dumps(record) + "\n")
                step += 1

            summary = {"epoch": epoch, "seconds": round(time.perf_counter() - started, 3),
                       "ema": {t.value: v for t, v in state.v.items()}}
            if epoch % config.eval_every == 0 or epoch == config.epochs:
                extractor = Extractor.from_model(model, tokenizer, schema, config)
                preds = extractor.predict_corpus(dev)
                report = score(preds, dev, mode="partial")
                summary["dev_f1"] = report.f1
                if report.f1 > result.best_f1:
                    result.best_f1, result.best_epoch = report.f1, epoch
                    best_state = copy.deepcopy(model.state_dict())
            result.epochs.append(summary)
            logger.info("epoch %d: %s", epoch, summary)
            if on_epoch:
                on_epoch(summary)
            if config.stop_at_f1 is not None and summary.get("dev_f1", -1) >= config.stop_at_f1:
                break
    finally:
        if log_file:
            log_file.close()
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return result
