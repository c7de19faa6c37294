"""Acceptance suite: one PASS/FAIL line per criterion in the terminal summary."""
import math
import time

import numpy as np
import pytest

import oracles
from conftest import DATA, make_dialogue, record_verdict
from gradcheck import model_check
from threadloom.corpus import (AnnotationError, ParseError, SchemaError, parse_annotations, parse_irc,
                               read_canonical, read_corpus, write_canonical)
from threadloom.decode import FrozenScorer, easy_first_decode, sequential_decode
from threadloom.experiment import desk_trial, majority
from threadloom.graphs import corrupt_replies, gaussian_prior
from threadloom.metrics import ari, local_k, nmi, one_to_one, scaled_vi, shen_f
from threadloom.model import DisentangleModel, ModelConfig
from threadloom.nn import softmax_candidates
from threadloom.synth import SynthConfig, generate

METRICS = {"ari": ari, "nmi": nmi, "scaled_vi": scaled_vi, "local_3": local_k, "shen_f": shen_f,
           "one_to_one": one_to_one}


def verdict(num, ok, detail):
    record_verdict(num, ok, detail)
    assert ok, detail


def test_criterion_1_metric_oracles():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = {k: 0.0 for k in METRICS}
    for _ in range(1000):
        n = int(rng.integers(1, 13))
        g = rng.integers(0, int(rng.integers(1, n + 1)), size=n).tolist()
        p = rng.integers(0, int(rng.integers(1, n + 1)), size=n).tolist()
        for name, fn in METRICS.items():
            worst[name] = max(worst[name], abs(fn(g, p) - oracles.ALL[name](g, p)))
    secs = time.perf_counter() - t0
    err = max(worst.values())
    verdict(1, err <= 1e-9 and secs < 10, f"max abs error {err:.2e} over 1000 pairs, {secs:.1f}s")


def test_criterion_2_hand_values():
    a = ari([0, 0, 1], [0, 1, 1])
    g = gaussian_prior(1)
    s = softmax_candidates([0.0, math.log(3)], [True, True])
    ok = a == -0.5 and abs(g - math.exp(-math.pi)) <= 1e-12 and np.allclose(s, [0.25, 0.75], rtol=0, atol=1e-12)
    verdict(2, ok, f"ari {a!r}, prior(1) {g!r}, softmax {s.tolist()}")


def test_criterion_3_gradients():
    rng = np.random.default_rng(77)
    t0 = time.perf_counter()
    worst = 0.0
    where = None
    for k in range(20):
        cfg = ModelConfig(hidden=int(rng.integers(2, 17)), label_dim=int(rng.integers(1, 5)),
                          ffnn_hidden=int(rng.integers(2, 9)), egcn_layers=int(rng.integers(1, 3)),
                          buckets=16, window=int(rng.integers(1, 7)), seed=k,
                          activation=str(rng.choice(["relu", "tanh"])), dropout=0.2)
        syn = SynthConfig(n_dialogues=1, seed=k, sessions=(2, 2), session_length=(2, 4), mention_prob=0.5)
        dialogue, forest = generate(syn)[0]
        model = DisentangleModel(cfg)
        pairs = corrupt_replies(forest.pairs(), 0.15, rng, cfg.window)
        errs = model_check(model, dialogue, forest, rng, reply_pairs=pairs, train=bool(k % 2),
                           n_dirs=1, n_coords=2)
        name = max(errs, key=errs.get)
        if errs[name] > worst:
            worst, where = errs[name], (k, name)
    secs = time.perf_counter() - t0
    verdict(3, worst < 1e-4 and secs < 60, f"worst block rel. error {worst:.2e} at {where}, {secs:.1f}s")


def test_criterion_4_decoding():
    rng = np.random.default_rng(4)
    problems = []
    for trial in range(200):
        n, window = int(rng.integers(1, 31)), int(rng.integers(1, 9))
        m = np.full((n, n), -np.inf)
        m[np.tril_indices(n)] = rng.normal(size=n * (n + 1) // 2)
        dialogue = make_dialogue(["s"] * n)
        forest, trace = easy_first_decode(m, dialogue, window)
        active, frontier = list(range(min(window, n))), min(window, n)
        for s in trace.steps:
            top = max(m[i, j] for i in active for j in range(max(0, i - window + 1), i + 1))
            if m[s.child, s.parent] != top:
                problems.append(("not global max", trial))
            active.remove(s.child)
            if frontier < n:
                active.append(frontier)
                frontier += 1
        rows = sorted((c, max(0, c - window + 1) + int(np.argmax(m[c, max(0, c - window + 1):c + 1])))
                      for c in range(n))
        if sorted((s.child, s.parent) for s in trace.steps) != rows:
            problems.append(("multiset", trial))
        if any(not 0 <= p <= c for c, p in enumerate(forest.parent)):
            problems.append(("forest", trial))
        seen = []

        class Spy(FrozenScorer):
            def score(self, d, resolved, children):
                seen.append(all(c < min(children) for c, _ in resolved))
                return super().score(d, resolved, children)

        sequential_decode(Spy(m), dialogue, window)
        if not all(seen):
            problems.append(("future edge", trial))
    verdict(4, not problems, f"200 matrices, {len(problems)} violations {problems[:3]}")


def test_criterion_5_teacher_forcing():
    rng = np.random.default_rng(5)
    gold = {(c, int(rng.integers(0, c + 1))) for c in range(1, 10_001)}
    out = dict(corrupt_replies(gold, 0.15, 123, window=50))
    rate = sum(out[c] != p for c, p in gold) / len(gold)
    verdict(5, 0.14 <= rate <= 0.16, f"empirical corruption rate {rate:.4f}")


@pytest.fixture(scope="module")
def desk():
    t0 = time.perf_counter()
    trials = [desk_trial(seed) for seed in (0, 1, 2)]
    return trials, time.perf_counter() - t0


def test_criterion_6_ablation_trends(desk):
    trials, secs = desk
    for t in trials:
        print(t.summary())
    a = majority(t.graphs_help for t in trials)
    b = majority(t.easy_first_wins for t in trials)
    c = majority(t.hrl_wins for t in trials)
    gaps = [round(100 * (t.link_f1["full"] - t.link_f1["w/o ALL"]), 2) for t in trials]
    seq = [round(100 * (t.link_f1["full"] - t.link_f1["Seq. order"]), 2) for t in trials]
    hrl = [round(100 * (t.cluster_f1["full"] - t.cluster_f1["w/o L2&L3"]), 2) for t in trials]
    detail = (f"(a) {'ok' if a else 'no'} full-w/oALL link {gaps}; (b) {'ok' if b else 'no'} easy-seq link {seq}; "
              f"(c) {'ok' if c else 'no'} HRL-pairwise cluster {hrl}; {secs:.0f}s")
    verdict(6, a and b and c and secs < 600, detail)


def test_criterion_7_entropy(desk):
    trials, _ = desk
    ok = majority(t.easy_first_more_certain for t in trials)
    pairs = [(round(t.entropy_easy_first, 4), round(t.entropy_sequential, 4)) for t in trials]
    verdict(7, ok, f"early -log p (easy-first, sequential) per seed {pairs}")


def test_criterion_8_ingestion(tmp_path):
    raw = (DATA / "irc_sample.log").read_text().splitlines()
    ann = (DATA / "irc_sample.annotation.txt").read_text().splitlines()
    d, f = parse_irc(raw, ann, "irc_sample")
    path = tmp_path / "c.jsonl"
    write_canonical(d, f, path)
    back = read_canonical(path)
    lossless = back == (d, f) and len(d) == 50
    errors = []
    checks = [
        (ParseError, lambda: parse_irc((DATA / "malformed_no_speaker.log").read_text().splitlines(), [])),
        (AnnotationError, lambda: parse_annotations(
            (DATA / "malformed_future_parent.annotation.txt").read_text().splitlines(), 3)),
        (AnnotationError, lambda: parse_annotations(
            (DATA / "malformed_not_int.annotation.txt").read_text().splitlines(), 3)),
        (SchemaError, lambda: read_corpus(DATA / "malformed_missing_parent.jsonl")),
        (SchemaError, lambda: read_corpus(DATA / "malformed_parent_range.jsonl")),
        (SchemaError, lambda: read_corpus(DATA / "malformed_json.jsonl")),
    ]
    for cls, fn in checks:
        try:
            fn()
            errors.append(f"{cls.__name__} not raised")
        except cls:
            pass
        except Exception as exc:  # wrong class
            errors.append(f"expected {cls.__name__}, got {type(exc).__name__}")
    verdict(8, lossless and not errors, f"round trip {'lossless' if lossless else 'LOSSY'}; "
                                        f"{len(checks) - len(errors)}/{len(checks)} malformed fixtures raise correctly")
