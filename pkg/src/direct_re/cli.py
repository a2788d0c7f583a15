"""Command-line entry point: ingest, stats, train, predict, evaluate, cost.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime/numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .mtl import TrainConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
HOME_ENV = "DIRECT_RE_HOME"
ABLATIONS = {
    "shared": "shared_heads",
    "equal": "equal_weights",
    "threshold": "threshold_decode",
    "plain-optim": "plain_optimizer",
}

logger = logging.getLogger("direct_re")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def append_manifest(directory: Path, manifest: dict) -> Path:
    path = directory / "manifests.jsonl"
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, sort_keys=True) + "\n")
    return path


def _write_report(prefix: str | None, data: dict, table: str, extra: dict[str, str] | None = None) -> None:
    print(table)
    if prefix:
        Path(prefix).parent.mkdir(parents=True, exist_ok=True)
        Path(f"{prefix}.json").write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
        Path(f"{prefix}.txt").write_text(table + "\n", encoding="utf-8")
        for suffix, text in (extra or {}).items():
            Path(f"{prefix}{suffix}").write_text(text, encoding="utf-8")


def cmd_ingest(args) -> int:
    from .corpus import infer_schema, load_dataset, load_schema, save_corpus

    schema = load_schema(args.schema) if args.schema else None
    corpus = load_dataset(args.raw, schema)
    schema = schema or infer_schema(corpus)
    save_corpus(corpus, schema, args.out)
    print(f"wrote {len(corpus)} sentences, {schema.c} relations to {args.out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    from .corpus import corpus_stats, format_stats, load_dataset

    stats = corpus_stats(load_dataset(args.corpus))
    _write_report(args.out, stats, format_stats(stats))
    return EXIT_OK


REQUIRED_KEYS = ("train_file",)
PATH_KEYS = ("train_file", "dev_file", "schema_file", "output_dir")


def load_run_config(path: str | Path, overrides: dict) -> tuple[dict, "TrainConfig"]:
    from .mtl import TrainConfig

    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    for key in REQUIRED_KEYS:
        if key not in data:
            raise UsageError(f"config is missing required key '{key}'")
    paths = {k: data.pop(k) for k in PATH_KEYS if k in data}
    try:
        config = TrainConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc
    return paths, config


def cmd_train(args) -> int:
    from .checkpoint import save_checkpoint
    from .corpus import load_dataset, load_schema, read_schema_header
    from .encoding import WhitespaceTokenizer
    from .mtl import train

    overrides = {"seed": args.seed, "backend": args.backend, "output_dir": args.out}
    for name in args.ablation or []:
        overrides[ABLATIONS[name]] = True
    paths, config = load_run_config(args.config, overrides)
    out = Path(paths.get("output_dir") or Path(os.environ.get(HOME_ENV, "runs")) /
               datetime.now().strftime("run-%Y%m%d-%H%M%S"))
    out.mkdir(parents=True, exist_ok=True)

    schema = (load_schema(paths["schema_file"]) if "schema_file" in paths
              else read_schema_header(paths["train_file"]))
    corpus = load_dataset(paths["train_file"], schema)
    dev = load_dataset(paths["dev_file"], schema) if "dev_file" in paths else None
    started = _now()
    result = train(corpus, config, schema, dev=dev, log_path=out / "train_log.jsonl")
    ckpt = out / "model.pt"
    save_checkpoint(ckpt, result.model, result.tokenizer, result.schema, config)
    if isinstance(result.tokenizer, WhitespaceTokenizer):
        result.tokenizer.save(out / "vocab.txt")
    (out / "epochs.json").write_text(json.dumps(result.epochs, indent=2) + "\n", encoding="utf-8")
    append_manifest(out, {
        "command": "train",
        "config": config.to_dict(),
        "paths": {k: str(v) for k, v in paths.items()},
        "seed": config.seed,
        "datasets": {k: _sha256(v) for k, v in paths.items() if k.endswith("_file")},
        "checkpoint": str(ckpt),
        "best_epoch": result.best_epoch,
        "best_dev_f1": result.best_f1,
        "started": started,
        "finished": _now(),
    })
    print(f"best dev F1 {result.best_f1:.4f} at epoch {result.best_epoch}; checkpoint {ckpt}")
    return EXIT_OK


def cmd_predict(args) -> int:
    from .pipeline import predict_file

    started = _now()
    n = predict_file(args.corpus, args.checkpoint, args.out)
    out = Path(args.out)
    append_manifest(out.parent, {
        "command": "predict",
        "checkpoint": str(args.checkpoint),
        "checkpoint_sha256": _sha256(args.checkpoint),
        "datasets": {"corpus": _sha256(args.corpus)},
        "output": str(out),
        "sentences": n,
        "started": started,
        "finished": _now(),
    })
    print(f"wrote predictions for {n} sentences to {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .corpus import load_dataset
    from .evaluation import score
    from .pipeline import read_predictions

    report = score(read_predictions(args.predictions), load_dataset(args.gold), args.mode)
    _write_report(args.out, report.to_json(), report.format_table(), {"_by_n.csv": report.by_n_csv()})
    return EXIT_OK


def cmd_cost(args) -> int:
    from .corpus import load_dataset, read_schema_header
    from .costmodel import cost_report, format_cost_report, parse_kind, word_length

    kinds = [parse_kind(k) for k in args.kinds.split(",")]
    corpus = load_dataset(args.corpus)
    num_relations = args.relations
    if num_relations is None:
        schema = read_schema_header(args.corpus)
        if schema is None:
            raise UsageError("--relations is required for corpora without a schema header")
        num_relations = schema.c
    lengths = {"words": word_length}
    if args.pretrained:
        from .corpus import retokenize
        from .encoding import PretrainedTokenizer

        sub = retokenize(corpus, PretrainedTokenizer.from_pretrained(args.pretrained))
        by_id = {rec.sentence.id: len(rec.sentence.tokens) for rec in sub}
        lengths["subwords"] = lambda s: by_id[s.id]
    report = cost_report(corpus, num_relations, kinds, lengths)
    _write_report(args.out, report, format_cost_report(report))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="direct-re", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="convert a release-format file to the canonical corpus format")
    p.add_argument("raw")
    p.add_argument("out")
    p.add_argument("--schema", help="relation labels (JSON list or rel2id map)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="overlap-class and triplet-count statistics")
    p.add_argument("corpus")
    p.add_argument("--out", help="write <out>.json and <out>.txt")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--backend", choices=("toy", "pretrained"))
    p.add_argument("--ablation", action="append", choices=sorted(ABLATIONS))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="cascade extraction over a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    p.add_argument("predictions")
    p.add_argument("gold")
    p.add_argument("--mode", choices=("partial", "exact"), default="partial")
    p.add_argument("--out", help="write <out>.json, <out>.txt and <out>_by_n.csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cost", help="average predicted-logits cost per sentence")
    p.add_argument("corpus")
    p.add_argument("--kinds", default="copyre,mhs,casrel,direct")
    p.add_argument("--relations", type=int, help="relation-type count (default: corpus schema)")
    p.add_argument("--pretrained", help="also count subword tokens with this tokenizer")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cost)
    return parser


def main(argv: list[str] | None = None) -> int:
    from .checkpoint import CheckpointError
    from .corpus import CorpusError
    from .evaluation import EvaluationError
    from .mtl import TrainingError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, EvaluationError, CheckpointError, FileNotFoundError, IsADirectoryError,
            json.JSONDecodeError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, RuntimeError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
