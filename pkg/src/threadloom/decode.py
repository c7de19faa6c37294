"""Easy-first and sequential decoding of reply forests from pairwise scores."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import Dialogue, ReplyForest, candidate_window
from .nn import softmax_candidates

NEG_INF = -np.inf


@dataclass
class ScoreMatrix:
    entries: np.ndarray  # (n, n); NEG_INF outside valid (child, candidate) cells
    window: int

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def finite(self) -> np.ndarray:
        return np.isfinite(self.entries)

    def row(self, i: int) -> tuple[list[int], np.ndarray]:
        cands = list(candidate_window(i, self.window))
        return cands, self.entries[i, cands]


@dataclass
class DecodeStep:
    step: int
    child: int
    parent: int
    score: float
    candidates: list[int]
    distribution: list[float]
    entropy: float

    def to_json(self) -> dict:
        return {"step": self.step, "child": self.child, "parent": self.parent,
                "score": self.score, "entropy": self.entropy}


@dataclass
class DecodeTrace:
    steps: list[DecodeStep] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    def entropies(self) -> list[float]:
        return [s.entropy for s in self.steps]

    def write_jsonl(self, path_or_fh) -> None:
        if hasattr(path_or_fh, "write"):
            for s in self.steps:
                path_or_fh.write(json.dumps(s.to_json()) + "\n")
        else:
            with open(path_or_fh, "w", encoding="utf-8") as fh:
                self.write_jsonl(fh)


class FrozenScorer:
    """Scores read from a fixed matrix, ignoring the partial-reply graph."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=np.float64)

    def score(self, dialogue, resolved, children):
        out = {}
        for c in children:
            cands = list(range(c + 1))
            out[c] = (cands, self.matrix[c, cands])
        return out


class ModelScorer:
    def __init__(self, model):
        self.model = model
        self._prep = {}

    def score(self, dialogue: Dialogue, resolved, children):
        key = id(dialogue)
        if key not in self._prep or self._prep[key][0] is not dialogue:
            if len(self._prep) > 64:
                self._prep.clear()
            self._prep[key] = (dialogue, self.model.prepare(dialogue))
        return self.model.score_children(self._prep[key][1], resolved, list(children))


def as_scorer(model):
    if hasattr(model, "score"):
        return model
    if hasattr(model, "score_children"):
        return ModelScorer(model)
    return FrozenScorer(model)


def score_window(model, dialogue: Dialogue, resolved: Iterable[tuple[int, int]],
                 children: Iterable[int], window: int) -> ScoreMatrix:
    resolved = set(resolved)
    for c, p in resolved:
        if p > c:
            raise ValueError(f"resolved pair ({c}, {p}) has parent after child")
    n = len(dialogue)
    entries = np.full((n, n), NEG_INF)
    children = sorted(set(children))
    if not children:
        return ScoreMatrix(entries, window)
    scored = as_scorer(model).score(dialogue, resolved, children)
    for c in children:
        cands, vals = scored[c]
        lo = c - window
        for j, v in zip(cands, vals):
            if lo < j <= c:
                entries[c, j] = v
    return ScoreMatrix(entries, window)


def decision_entropy(distribution, chosen: int) -> float:
    p = float(np.asarray(distribution)[chosen])
    if p <= 0.0:
        return math.inf
    return 0.0 - math.log(p)


def _step(k: int, matrix: ScoreMatrix, child: int, parent: int) -> DecodeStep:
    cands, row = matrix.row(child)
    dist = softmax_candidates(row, np.isfinite(row))
    pos = cands.index(parent)
    return DecodeStep(k, child, parent, float(matrix.entries[child, parent]), cands,
                      dist.tolist(), decision_entropy(dist, pos))


def _global_argmax(entries: np.ndarray, active: Sequence[int]) -> tuple[int, int]:
    best = None
    for i in sorted(active):
        row = entries[i]
        fin = np.nonzero(np.isfinite(row))[0]
        vals = row[fin]
        top = vals.max()
        j = int(fin[np.nonzero(vals == top)[0][-1]])  # nearest parent on ties
        if best is None or top > best[0]:
            best = (top, i, j)
    return best[1], best[2]


def easy_first_decode(model, dialogue: Dialogue, window: int) -> tuple[ReplyForest, DecodeTrace]:
    n = len(dialogue)
    if n == 0:
        raise ValueError("empty dialogue")
    scorer = as_scorer(model)
    frontier = min(window, n)
    active = list(range(frontier))
    parent: dict[int, int] = {}
    resolved: set[tuple[int, int]] = set()
    trace = DecodeTrace()
    while active:
        matrix = score_window(scorer, dialogue, resolved, active, window)
        i, j = _global_argmax(matrix.entries, active)
        trace.steps.append(_step(len(trace), matrix, i, j))
        parent[i] = j
        resolved.add((i, j))
        active.remove(i)
        if frontier < n:
            active.append(frontier)
            frontier += 1
    return ReplyForest.from_mapping(parent, n), trace


def sequential_decode(model, dialogue: Dialogue, window: int) -> tuple[ReplyForest, DecodeTrace]:
    n = len(dialogue)
    if n == 0:
        raise ValueError("empty dialogue")
    scorer = as_scorer(model)
    parent: dict[int, int] = {}
    resolved: set[tuple[int, int]] = set()
    trace = DecodeTrace()
    for c in range(n):
        matrix = score_window(scorer, dialogue, resolved, [c], window)
        j = _global_argmax(matrix.entries, [c])[1]
        trace.steps.append(_step(c, matrix, c, j))
        parent[c] = j
        resolved.add((c, j))
    return ReplyForest.from_mapping(parent, n), trace


DECODERS = {"easy-first": easy_first_decode, "sequential": sequential_decode}
