"""Desk-scale synthetic ablation: the trend checks behind the graph and loss ablations."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .synth import SynthConfig, generate
from .train import ablate

# Small enough for a desktop CPU: about 45 s per full training run on 200 dialogues.
DESK = dict(hidden_size=16, label_embedding_dim=10, ffnn_hidden_size=32, hash_buckets=512,
            batch_size=4, learning_rate=1.0, epoch_size=12)

DESK_ROWS = ("full", "Seq. order", "w/o ALL", "w/o L2&L3")
TEST_SEED_OFFSET = 100_003


def desk_config(seed: int = 0, **overrides) -> RunConfig:
    return RunConfig(**{**DESK, "seed": seed, **overrides})


def desk_corpus(seed: int, n_train: int = 200, n_test: int = 40, **synth):
    train = generate(SynthConfig(n_dialogues=n_train, seed=seed, **synth), prefix="train")
    test = generate(SynthConfig(n_dialogues=n_test, seed=seed + TEST_SEED_OFFSET, **synth), prefix="test")
    return train, test


def early_entropy(traces: list[list[float]], fraction: float = 0.1) -> float:
    """Mean -log p over the first ``fraction`` of each dialogue's decisions (at least one)."""
    picked = []
    for steps in traces:
        k = max(1, math.ceil(fraction * len(steps)))
        picked += steps[:k]
    return float(np.mean(picked))


@dataclass
class DeskTrial:
    seed: int
    link_f1: dict[str, float]
    cluster_f1: dict[str, float]
    entropy_easy_first: float
    entropy_sequential: float
    seconds: float
    rows: list = field(default_factory=list, repr=False)

    @property
    def graphs_help(self) -> bool:
        return self.link_f1["full"] - self.link_f1["w/o ALL"] >= 0.02

    @property
    def easy_first_wins(self) -> bool:
        return self.link_f1["full"] >= self.link_f1["Seq. order"]

    @property
    def hrl_wins(self) -> bool:
        return self.cluster_f1["full"] >= self.cluster_f1["w/o L2&L3"]

    @property
    def easy_first_more_certain(self) -> bool:
        return self.entropy_easy_first <= self.entropy_sequential

    def summary(self) -> str:
        cells = "  ".join(f"{k} link {100 * self.link_f1[k]:.2f} clus {100 * self.cluster_f1[k]:.2f}"
                          for k in self.link_f1)
        return (f"seed {self.seed}: {cells}  H(easy) {self.entropy_easy_first:.4f} "
                f"H(seq) {self.entropy_sequential:.4f}  [{self.seconds:.0f}s]")


def desk_trial(seed: int, n_train: int = 200, n_test: int = 40, rows=DESK_ROWS, **overrides) -> DeskTrial:
    t0 = time.perf_counter()
    train, test = desk_corpus(seed, n_train, n_test)
    results = ablate(desk_config(seed, **overrides), train, test, rows)
    by = {r.name: r for r in results}
    return DeskTrial(
        seed,
        {k: r.report.link_f1 for k, r in by.items()},
        {k: r.report.cluster_f1 for k, r in by.items()},
        early_entropy(by["full"].entropies) if "full" in by else math.nan,
        early_entropy(by["Seq. order"].entropies) if "Seq. order" in by else math.nan,
        time.perf_counter() - t0,
        results,
    )


def majority(flags) -> bool:
    flags = list(flags)
    return sum(flags) * 2 > len(flags)
