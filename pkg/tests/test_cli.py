import json

import pytest

from direct_re.cli import main
from direct_re.corpus import save_corpus
from direct_re.fixtures import toy_corpus_path

RAW = [
    {"text": "Barack Obama was born in Honolulu , USA .",
     "triple_list": [["Barack Obama", "born_in", "Honolulu"], ["Honolulu", "located_in", "USA"]]},
    {"text": "Acme Corp hired Tom Baker .", "triple_list": [["Tom Baker", "works_for", "Acme Corp"]]},
]


@pytest.fixture
def raw_files(tmp_path):
    raw = tmp_path / "train.json"
    raw.write_text(json.dumps(RAW))
    rel = tmp_path / "rel2id.json"
    rel.write_text(json.dumps({"born_in": 0, "located_in": 1, "works_for": 2}))
    return raw, rel


def test_ingest_is_byte_idempotent(tmp_path, raw_files):
    raw, rel = raw_files
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["ingest", str(raw), str(a), "--schema", str(rel)]) == 0
    assert main(["ingest", str(raw), str(b), "--schema", str(rel)]) == 0
    assert a.read_bytes() == b.read_bytes()
    # re-ingesting the canonical file reproduces it
    c = tmp_path / "c.jsonl"
    assert main(["ingest", str(a), str(c)]) == 0
    assert c.read_bytes() == a.read_bytes()


def test_missing_input_is_a_data_error(tmp_path, capsys):
    assert main(["stats", str(tmp_path / "missing.jsonl")]) == 2
    assert "missing.jsonl" in capsys.readouterr().err


def test_unknown_label_is_a_data_error(tmp_path, raw_files):
    raw, _ = raw_files
    rel = tmp_path / "small.json"
    rel.write_text(json.dumps(["born_in"]))
    assert main(["ingest", str(raw), str(tmp_path / "o.jsonl"), "--schema", str(rel)]) == 2


def test_usage_errors_exit_one(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 1
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 1}))
    assert main(["train", "--config", str(cfg)]) == 1
    assert "train_file" in capsys.readouterr().err


def test_stats_report(tmp_path):
    out = tmp_path / "stats"
    assert main(["stats", str(toy_corpus_path()), "--out", str(out)]) == 0
    data = json.loads((tmp_path / "stats.json").read_text())
    assert data["overlap"]["ALL"] == 64
    assert (tmp_path / "stats.txt").exists()


def _config(tmp_path, corpus, **kw):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"train_file": str(corpus), "epochs": 2, "batch_size": 8,
                               "hidden_size": 16, "num_layers": 1, "lr": 1e-3, **kw}))
    return cfg


@pytest.fixture
def small_corpus(tmp_path, toy_corpus, schema):
    path = tmp_path / "small.jsonl"
    save_corpus(toy_corpus[:10], schema, path)
    return path


def test_end_to_end_composition(tmp_path, small_corpus):
    run = tmp_path / "run"
    assert main(["train", "--config", str(_config(tmp_path, small_corpus)), "--out", str(run)]) == 0
    for name in ("model.pt", "train_log.jsonl", "epochs.json", "manifests.jsonl", "vocab.txt"):
        assert (run / name).exists(), name
    manifest = json.loads((run / "manifests.jsonl").read_text().splitlines()[-1])
    assert manifest["command"] == "train" and manifest["seed"] == 42
    pred = tmp_path / "pred.jsonl"
    assert main(["predict", "--checkpoint", str(run / "model.pt"), str(small_corpus), "--out", str(pred)]) == 0
    assert len(pred.read_text().splitlines()) == 10
    report = tmp_path / "eval"
    assert main(["evaluate", str(pred), str(small_corpus), "--out", str(report)]) == 0
    data = json.loads((tmp_path / "eval.json").read_text())
    assert data["sentences"] == 10 and 0.0 <= data["overall"]["f1"] <= 1.0
    assert (tmp_path / "eval_by_n.csv").exists()
    assert main(["cost", str(small_corpus), "--out", str(tmp_path / "cost")]) == 0
    cost = json.loads((tmp_path / "cost.json").read_text())
    assert set(cost["costs"]["words"]) == {"EdgeList_CopyRE", "AdjMatrix_MHS", "AdjList_CasRel", "AdjList_DIRECT"}


def test_evaluate_rejects_mismatched_ids(tmp_path, small_corpus):
    pred = tmp_path / "pred.jsonl"
    pred.write_text(json.dumps({"id": "nope", "triples": []}) + "\n")
    assert main(["evaluate", str(pred), str(small_corpus)]) == 2


def test_seed_repeat_gives_identical_log(tmp_path, small_corpus):
    cfg = _config(tmp_path, small_corpus, dropout=0.1)
    logs = []
    for name in ("a", "b"):
        assert main(["train", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path / name)]) == 0
        logs.append((tmp_path / name / "train_log.jsonl").read_bytes())
    assert logs[0] == logs[1]
    assert main(["train", "--config", str(cfg), "--seed", "8", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "train_log.jsonl").read_bytes() != logs[0]


def test_ablation_flags_reach_config(tmp_path, small_corpus):
    cfg = _config(tmp_path, small_corpus, epochs=1)
    run = tmp_path / "abl"
    assert main(["train", "--config", str(cfg), "--out", str(run),
                 "--ablation", "equal", "--ablation", "shared"]) == 0
    manifest = json.loads((run / "manifests.jsonl").read_text())
    assert manifest["config"]["equal_weights"] and manifest["config"]["shared_heads"]
    weights = [json.loads(l)["weight"] for l in (run / "train_log.jsonl").read_text().splitlines()]
    assert set(weights) == {1.0}


def test_corrupt_checkpoint_is_a_data_error(tmp_path, small_corpus, capsys):
    bad = tmp_path / "bad.pt"
    bad.write_bytes(b"not a checkpoint")
    assert main(["predict", "--checkpoint", str(bad), str(small_corpus), "--out", str(tmp_path / "p")]) == 2
    assert "cannot read checkpoint" in capsys.readouterr().err
