"""Single-file checkpoint archive holding parameters, tokenizer and config."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from .encoding import PretrainedTokenizer, Tokenizer, WhitespaceTokenizer
from .mtl import TrainConfig, build_model
from .types import RelationSchema

CHECKPOINT_FORMAT = "direct-re-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: nn.Module
    tokenizer: Tokenizer
    schema: RelationSchema
    config: TrainConfig


def save_checkpoint(path: str | Path, model: nn.Module, tokenizer: Tokenizer,
                    schema: RelationSchema, config: TrainConfig) -> None:
    archive = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "schema": list(schema.labels),
        "vocab": tokenizer.vocab if isinstance(tokenizer, WhitespaceTokenizer) else None,
        "state_dict": model.state_dict(),
    }
    torch.save(archive, path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        archive = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # torch raises several unrelated types for bad archives
        raise CheckpointError(f"cannot read checkpoint {path}: {str(exc).splitlines()[0]}") from exc
    if not isinstance(archive, dict) or archive.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} archive")
    if archive.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {archive.get('version')}")
    config = TrainConfig.from_dict(archive["config"])
    schema = RelationSchema(tuple(archive["schema"]))
    if config.backend == "pretrained":
        tokenizer = PretrainedTokenizer.from_pretrained(config.pretrained)
    else:
        tokenizer = WhitespaceTokenizer(archive["vocab"])
    model = build_model(config, tokenizer, schema)
    model.load_state_dict(archive["state_dict"])
    model.eval()
    return Checkpoint(model, tokenizer, schema, config)
