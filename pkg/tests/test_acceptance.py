"""Acceptance suite: one pass/fail line per criterion in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py -v``. Criteria that need the
public NYT / WebNLG releases read them from ``$DIRECT_RE_DATA/{nyt,webnlg}/``
(``train_triples.json`` or ``train.json``, the matching test file and
``rel2id.json``) and are reported as BLOCKED when the files are absent.
"""

import os
import random
import time
from fractions import Fraction
from pathlib import Path

import pytest
import torch

from direct_re.corpus import corpus_stats, derive_corpus_examples, load_dataset, load_schema
from direct_re.costmodel import ModelKind, cost_stats, dataset_cost, logits_cost, token_length, word_length
from direct_re.evaluation import score
from direct_re.heads import decode_spans
from direct_re.mtl import EmaState, TrainConfig, make_batch, task_weight, train, train_step, update_ema
from direct_re.pipeline import Extractor
from direct_re.types import Task

from conftest import ACCEPTANCE_RESULTS, small_model

pytestmark = pytest.mark.acceptance

S, O, R = Task.SUBJECT, Task.OBJECT, Task.RELATION
DATA_ENV = "DIRECT_RE_DATA"


def record(name, ok, detail):
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE_RESULTS.append((name, status, detail))
    print(f"[{status}] {name}: {detail}")
    assert ok, detail


def blocked(name, reason):
    ACCEPTANCE_RESULTS.append((name, "BLOCKED", reason))
    pytest.skip(reason)


def _find(folder: Path, stem: str) -> Path | None:
    for name in (f"{stem}_triples.json", f"{stem}.json", f"{stem}.jsonl"):
        if (folder / name).exists():
            return folder / name
    return None


def release(name):
    root = os.environ.get(DATA_ENV)
    if not root:
        return None
    folder = Path(root) / name
    files = {k: _find(folder, k) for k in ("train", "test")}
    files["rel2id"] = folder / "rel2id.json"
    if None in files.values() or not files["rel2id"].exists():
        return None
    schema = load_schema(files["rel2id"])
    return schema, load_dataset(files["train"], schema), load_dataset(files["test"], schema)


TOY_CONFIG = dict(lr=1e-3, batch_size=16, epochs=200, dropout=0.0, eval_every=5, stop_at_f1=1.0, seed=1)


def _fit(corpus, schema, **overrides):
    cfg = TrainConfig(**{**TOY_CONFIG, **overrides})
    started = time.perf_counter()
    result = train(corpus, cfg, schema)
    elapsed = time.perf_counter() - started
    extractor = Extractor.from_model(result.model, result.tokenizer, schema, cfg)
    preds = extractor.predict_corpus(corpus)
    return result, score(preds, corpus, "partial"), score(preds, corpus, "exact"), elapsed


@pytest.fixture(scope="module")
def toy_run(toy_corpus, schema):
    return _fit(toy_corpus, schema)


# 1 -------------------------------------------------------------------------

REFERENCE_STATS = {
    "nyt": {"train": (37013, 9782, 14735, 56195), "test": (3266, 978, 1297, 5000)},
    "webnlg": {"train": (1596, 227, 3406, 5019), "test": (246, 26, 457, 703)},
}
NYT_TEST_BY_N = (3244, 1045, 312, 291, 108)


@pytest.mark.parametrize("name", ["nyt", "webnlg"])
def test_c1_dataset_statistics(name):
    title = f"C1 dataset statistics ({name})"
    data = release(name)
    if data is None:
        blocked(title, f"release files not found under ${DATA_ENV}/{name}")
    _, train_set, test_set = data
    problems = []
    for split, corpus in (("train", train_set), ("test", test_set)):
        ov = corpus_stats(corpus)["overlap"]
        got = (ov["Normal"], ov["EPO"], ov["SEO"], ov["ALL"])
        if got != REFERENCE_STATS[name][split]:
            problems.append(f"{split} {got} != {REFERENCE_STATS[name][split]}")
    if name == "nyt":
        by_n = corpus_stats(test_set)["triplet_count"]
        got = tuple(by_n[k] for k in ("1", "2", "3", "4", ">=5"))
        if got != NYT_TEST_BY_N:
            problems.append(f"test per-N {got} != {NYT_TEST_BY_N}")
    record(title, not problems, "; ".join(problems) or "all counts match exactly")


# 2 -------------------------------------------------------------------------

def brute_force_decode(ps, pe, alpha):
    """Enumerate every start above threshold and scan its window for the first maximal end."""
    n = len(ps)
    spans = []
    for i in range(n):
        if not ps[i] > alpha:
            continue
        j = i + 1
        while j < n and not ps[j] > alpha:
            j += 1
        window = pe[i:j]
        top = max(window)
        spans.append((i, i + min(k for k, v in enumerate(window) if v == top)))
    return spans


def test_c2_span_decoder_oracle():
    rng = random.Random(20240601)
    started = time.perf_counter()
    mismatches = 0
    for trial in range(1000):
        n = rng.randint(1, 64)
        alpha = (0.5, 0.9)[trial % 2]
        ps = [rng.random() for _ in range(n)]
        # coarse values in half the trials make ties and exact-threshold hits common
        if trial % 4 < 2:
            pe = [rng.choice((0.1, 0.5, 0.9, 0.95)) for _ in range(n)]
            ps = [rng.choice((0.1, 0.5, 0.9, 0.95)) for _ in range(n)]
        else:
            pe = [rng.random() for _ in range(n)]
        if decode_spans(ps, pe, alpha) != brute_force_decode(ps, pe, alpha):
            mismatches += 1
    elapsed = time.perf_counter() - started
    record("C2 span decoder oracle", mismatches == 0 and elapsed < 60,
           f"{mismatches} mismatches over 1000 vectors in {elapsed:.2f}s")


# 3 -------------------------------------------------------------------------

def test_c3_ema_weight_arithmetic(toy_run):
    rng = random.Random(7)
    worst = 0.0
    for _ in range(1000):
        n = {t: rng.randint(1, 500) for t in (S, O, R)}
        v = {t: rng.uniform(1e-3, 50.0) for t in (S, O, R)}
        decay = rng.choice((0.0, 0.5, 0.9, 0.99, rng.random()))
        task = rng.choice((S, O, R))
        loss_sum = rng.uniform(0.0, 100.0)
        state = update_ema(EmaState(v, n, decay), task, loss_sum)

        ev = {t: Fraction(x) for t, x in v.items()}
        ev[task] = (1 - Fraction(decay)) * Fraction(loss_sum) + Fraction(decay) * ev[task]
        for t in (S, O, R):
            worst = max(worst, abs(state.v[t] - ev[t]) / ev[t])
            expected = (ev[t] / n[t]) / (ev[R] / n[R])
            worst = max(worst, abs(Fraction(task_weight(state, t)) - expected) / expected)
    result = toy_run[0]
    r_weights = [rec["weight"] for rec in result.log if rec["task"] == "r"]
    ok = worst < 1e-12 and r_weights and all(w == 1.0 for w in r_weights)
    record("C3 EMA/weight arithmetic", ok,
           f"max rel error {float(worst):.2e} over 1000 states; "
           f"w_r = 1 on {len(r_weights)}/{len(r_weights)} logged relation steps")


# 4 -------------------------------------------------------------------------

def test_c4_lazy_update(toy_corpus, toy_tokenizer, schema):
    ex = derive_corpus_examples(toy_corpus[:8], schema, toy_tokenizer)
    batches = {t: make_batch(t, ex[t][:8], toy_tokenizer.pad_id) for t in (S, O, R)}
    cfg = TrainConfig(lr=1e-2)
    failures = []
    for task in (S, O):
        model = small_model(toy_tokenizer, schema.c)
        opt = torch.optim.Adam(model.parameters(), lr=1e-2)
        state = EmaState.initial({S: 1, O: 1, R: 1})
        others = [t for t in (S, O, R) if t is not task]
        before = {t: [p.detach().clone() for p in model.head_parameters(t)] for t in others}
        train_step(model, opt, task, batches[task], state, cfg)
        for t in others:
            if not all(torch.equal(a, b) for a, b in zip(before[t], model.head_parameters(t))):
                failures.append(f"{t.value}-head moved after {task.value} step")
    record("C4 lazy-update contract", not failures,
           "; ".join(failures) or "idle heads bitwise unchanged after s and o steps")


# 5 -------------------------------------------------------------------------

def test_c5_gradient_check(toy_corpus, toy_tokenizer, schema):
    started = time.perf_counter()
    model = small_model(toy_tokenizer, schema.c, hidden=16, dtype=torch.float64, seed=5)
    model.train()
    ex = derive_corpus_examples(toy_corpus[:6], schema, toy_tokenizer)
    batches = {t: make_batch(t, ex[t][:6], toy_tokenizer.pad_id) for t in (S, O)}
    rng = random.Random(5)
    eps = 1e-6
    worst, probes = 0.0, 0
    for probe in range(100):
        task = (S, O)[probe % 2]
        params = model.head_parameters(task)
        model.zero_grad(set_to_none=True)
        model.loss(task, batches[task]).mean().backward()
        p = rng.choice(params)
        idx = tuple(rng.randrange(d) for d in p.shape)
        analytic = p.grad[idx].item()
        with torch.no_grad():
            orig = p[idx].item()
            p[idx] = orig + eps
            hi = model.loss(task, batches[task]).mean().item()
            p[idx] = orig - eps
            lo = model.loss(task, batches[task]).mean().item()
            p[idx] = orig
        numeric = (hi - lo) / (2 * eps)
        scale = max(abs(numeric), abs(analytic))
        rel = abs(numeric - analytic) / scale if scale > 0 else 0.0
        worst = max(worst, rel)
        probes += 1
    elapsed = time.perf_counter() - started
    record("C5 gradient check", worst < 1e-4 and elapsed < 120,
           f"max rel error {worst:.2e} over {probes} probes in {elapsed:.1f}s")


# 6 -------------------------------------------------------------------------

def test_c6_desk_scale_end_to_end(toy_run):
    result, partial, exact, elapsed = toy_run
    ok = partial.f1 >= 0.99 and exact.f1 >= 0.99 and elapsed < 600 and result.best_epoch <= 200
    record("C6 toy end-to-end", ok,
           f"partial F1 {partial.f1:.4f}, exact F1 {exact.f1:.4f}, best epoch {result.best_epoch}, "
           f"{elapsed:.1f}s")


# 7 -------------------------------------------------------------------------

REFERENCE_COSTS = {
    "nyt": {ModelKind.ADJ_LIST_DIRECT: 238, ModelKind.ADJ_LIST_CASREL: 3084,
            ModelKind.ADJ_MATRIX_MHS: 57369, ModelKind.EDGE_LIST_COPYRE: 329},
    "webnlg": {ModelKind.ADJ_LIST_DIRECT: 542, ModelKind.ADJ_LIST_CASREL: 15836,
               ModelKind.ADJ_MATRIX_MHS: 26518, ModelKind.EDGE_LIST_COPYRE: 712},
}


def _subword_length():
    try:
        from direct_re.encoding import PretrainedTokenizer

        tok = PretrainedTokenizer.from_pretrained("bert-base-cased")
    except Exception:
        return None
    return lambda sentence: len(tok.tokenize(sentence.text))


@pytest.mark.parametrize("name", ["nyt", "webnlg"])
def test_c7_cost_model(name):
    title = f"C7 cost model ({name})"
    data = release(name)
    if data is None:
        blocked(title, f"release files not found under ${DATA_ENV}/{name}")
    schema, _, test_set = data
    lengths = {"words": word_length}
    sub = _subword_length()
    if sub is not None:
        lengths["subwords"] = sub
    details, any_ok = [], False
    for label, fn in lengths.items():
        errs = {k: dataset_cost(test_set, k, schema.c, fn) / ref - 1 for k, ref in REFERENCE_COSTS[name].items()}
        ok = all(abs(e) <= 0.15 for e in errs.values())
        any_ok |= ok
        details.append(label + " " + ", ".join(f"{k.value} {100 * e:+.1f}%" for k, e in errs.items()))
    violations = 0
    for rec in test_set:
        cs = cost_stats(rec, schema.c, token_length)
        if logits_cost(ModelKind.ADJ_LIST_DIRECT, cs) > logits_cost(ModelKind.ADJ_LIST_CASREL, cs):
            violations += 1
    if sub is None:
        details.append("subword tokenizer unavailable")
    details.append(f"DIRECT > CasRel on {violations}/{len(test_set)} sentences")
    record(title, any_ok and violations == 0, "; ".join(details))


# 8 -------------------------------------------------------------------------

def test_c8_equal_weights_log(toy_corpus, schema):
    result = train(toy_corpus, TrainConfig(**{**TOY_CONFIG, "epochs": 3, "stop_at_f1": None,
                                              "equal_weights": True}), schema)
    weights = {rec["weight"] for rec in result.log}
    record("C8a equal_weights logs w = 1", weights == {1.0},
           f"{len(result.log)} logged steps, weights seen {sorted(weights)[:5]}")


def test_c8_shared_heads_identical(toy_corpus, toy_tokenizer, schema):
    from direct_re.encoding import assemble_s, collate

    model = small_model(toy_tokenizer, schema.c, shared=True).eval()
    batch = collate([assemble_s(r.sentence, toy_tokenizer) for r in toy_corpus[:16]], toy_tokenizer.pad_id)
    with torch.no_grad():
        s = model.span_probabilities(S, batch)
        o = model.span_probabilities(O, batch)
    same = all(torch.equal(a.p_start, b.p_start) and torch.equal(a.p_end, b.p_end) for a, b in zip(s, o))
    record("C8b shared_heads identical outputs", same and model.subject_head is model.object_head,
           "subject and object heads are one module with identical outputs on 16 inputs")


def test_c8_threshold_decode(toy_corpus, schema):
    result, partial, exact, elapsed = _fit(toy_corpus, schema, threshold_decode=True)
    ok = partial.f1 >= 0.95 and exact.f1 >= 0.95
    record("C8c threshold_decode reaches F1 >= 0.95", ok,
           f"partial F1 {partial.f1:.4f}, exact F1 {exact.f1:.4f}, best epoch {result.best_epoch}, {elapsed:.1f}s")


def test_c8_equal_vs_full_direction(toy_run, toy_corpus, schema):
    full = toy_run[0]
    equal, partial, _, _ = _fit(toy_corpus, schema, equal_weights=True)
    direction = ("equal-weight underperforms" if (equal.best_f1, -equal.best_epoch) < (full.best_f1, -full.best_epoch)
                 else "equal-weight does not underperform")
    ACCEPTANCE_RESULTS.append((
        "C8d equal vs full (reported, not gated)", "INFO",
        f"full best F1 {full.best_f1:.4f} at epoch {full.best_epoch}; equal best F1 {equal.best_f1:.4f} "
        f"at epoch {equal.best_epoch}; {direction}"))


# 9 -------------------------------------------------------------------------

def test_c9_not_reproducible_at_desk_scale():
    ACCEPTANCE_RESULTS.append((
        "C9 full-scale benchmark numbers", "NOT GATED",
        "needs pretrained-encoder fine-tuning on the full releases; see configs/nyt.json and configs/webnlg.json"))
