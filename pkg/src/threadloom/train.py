"""Training, prediction, evaluation and ablation runs."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autograd import NonFiniteError
from .config import RunConfig
from .corpus import Dialogue, ReplyForest
from .decode import DECODERS, DecodeTrace
from .graphs import corrupt_replies
from .metrics import MetricReport, evaluate_corpus
from .model import DisentangleModel

log = logging.getLogger(__name__)

Corpus = Sequence[tuple[Dialogue, ReplyForest]]

ABLATIONS = {
    "full": {},
    "w/o G^S": {"use_speaker_graph": False},
    "w/o G^M": {"use_mention_graph": False},
    "w/o G^D": {"use_distance_graph": False},
    "w/o G^R": {"use_reply_graph": False},
    "w/o ALL": {"use_speaker_graph": False, "use_mention_graph": False,
                "use_distance_graph": False, "use_reply_graph": False},
    "w/o L3": {"use_l3": False},
    "w/o L2&L3": {"use_l2": False, "use_l3": False},
    "Seq. order": {"decoder": "sequential"},
}


class TrainingError(RuntimeError):
    pass


@dataclass
class StepLog:
    epoch: int
    step: int
    loss: float
    l1: float
    l2: float
    l3: float


@dataclass
class TrainResult:
    model: DisentangleModel
    config: RunConfig
    log: list[StepLog] = field(default_factory=list)
    seconds: float = 0.0


def _sgd(model: DisentangleModel, lr: float, clip: float) -> float:
    grads = [(t, t.grad) for t in model.params.values() if t.grad is not None]
    norm = float(np.sqrt(sum(float((g * g).sum()) for _, g in grads)))
    scale = lr * (clip / norm if clip > 0 and norm > clip else 1.0)
    for t, g in grads:
        t.data -= scale * g
    return norm


def train(config: RunConfig, corpus: Corpus) -> TrainResult:
    corpus = [(d, f) for d, f in corpus if f is not None and len(d) > 0]
    if not corpus:
        raise TrainingError("training corpus has no annotated dialogues")
    t0 = time.perf_counter()
    model = DisentangleModel(config.model_config())
    rng = np.random.default_rng(config.seed + 7919)
    preps = [model.prepare(d) for d, _ in corpus]
    forests = [f for _, f in corpus]
    weights = config.hrl_weights
    result = TrainResult(model, config)
    step = 0
    for epoch in range(config.epoch_size):
        order = rng.permutation(len(corpus))
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            bp = [preps[k] for k in idx]
            bf = [forests[k] for k in idx]
            instances = []
            for slot, forest in enumerate(bf):
                noisy = corrupt_replies(forest.pairs(), config.teacher_forcing_rate, rng, config.omega)
                for c in range(len(forest)):
                    instances.append((slot, c, [pr for pr in noisy if pr[0] != c]))
            try:
                batch = model.build_batch(bp, instances)
                scores = model.forward(bp, batch, train=True, rng=rng)
                levels = model.level_masks(batch, bf)
                loss, (l1, l2, l3) = model.loss(scores, levels, weights, config.use_l2, config.use_l3)
                model.zero_grad()
                loss.backward()
            except NonFiniteError as exc:
                raise TrainingError(f"epoch {epoch} step {step}: {exc}") from exc
            _sgd(model, config.learning_rate, config.clip_norm)
            if not np.isfinite(loss.data):
                raise TrainingError(f"epoch {epoch} step {step}: non-finite loss")
            entry = StepLog(epoch, step, float(loss.data), l1, l2, l3)
            result.log.append(entry)
            log.debug("epoch %d step %d loss %.4f L1 %.4f L2 %.4f L3 %.4f", epoch, step, entry.loss, l1, l2, l3)
            step += 1
    result.seconds = time.perf_counter() - t0
    return result


def predict(model: DisentangleModel, dialogues: Sequence[Dialogue], decoder: str = "easy-first",
            window: int | None = None) -> list[tuple[ReplyForest, DecodeTrace]]:
    fn = DECODERS[decoder]
    w = model.config.window if window is None else window
    return [fn(model, d, w) for d in dialogues]


def evaluate_predictions(gold: Sequence[ReplyForest], pred: Sequence[ReplyForest], mode: str = "micro") -> MetricReport:
    return evaluate_corpus(list(zip(gold, pred)), mode=mode)


@dataclass
class AblationRow:
    name: str
    seed: int
    report: MetricReport
    train_seconds: float
    entropies: list[list[float]] = field(default_factory=list)


def ablate(config: RunConfig, train_corpus: Corpus, test_corpus: Corpus,
           rows: Sequence[str] | None = None) -> list[AblationRow]:
    """Train and evaluate each ablation row under the same seed.

    "Seq. order" reuses the full model with the sequential decoder.
    """
    rows = list(ABLATIONS) if rows is None else list(rows)
    unknown = [r for r in rows if r not in ABLATIONS]
    if unknown:
        raise ValueError(f"unknown ablation rows {unknown}")
    trained: dict[str, TrainResult] = {}
    out = []
    dialogues = [d for d, _ in test_corpus]
    gold = [f for _, f in test_corpus]
    for name in rows:
        cfg = config.replace(**ABLATIONS[name])
        key = "full" if name == "Seq. order" else name
        if key not in trained:
            trained[key] = train(config.replace(**ABLATIONS[key]), train_corpus)
        res = trained[key]
        preds = predict(res.model, dialogues, cfg.decoder, cfg.omega)
        report = evaluate_predictions(gold, [f for f, _ in preds])
        out.append(AblationRow(name, config.seed, report, res.seconds, [t.entropies() for _, t in preds]))
    return out
