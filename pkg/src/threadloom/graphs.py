"""The four discourse structures over a node window, and reply-link corruption.

Node windows are sequences of utterance indices in increasing order; every
adjacency is indexed by position inside the window.
"""
from __future__ import annotations

import math
import re
import string
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import autograd as ag
from .corpus import Dialogue, Utterance, candidate_window
from .nn import BiaffineParams, biaffine_matrix

KINDS = ("S", "M", "D", "R")
_PUNCT = string.punctuation
_WORD = re.compile(r"\w+|[^\w\s]")

# 2*sqrt(2*pi): scale on the squared-distance term of the distance graph
DIST_SCALE = 2.0 * math.sqrt(2.0 * math.pi)


@dataclass
class Adjacency:
    kind: str
    weight: np.ndarray
    nodes: tuple[int, ...] = ()

    @property
    def size(self) -> int:
        return self.weight.shape[0]

    def w(self, i: int, j: int) -> float:
        return float(self.weight[i, j])

    def to_debug_json(self) -> dict:
        ii, jj = np.nonzero(self.weight)
        return {
            "kind": self.kind,
            "size": self.size,
            "nodes": list(self.nodes),
            "triplets": [(int(i), int(j), float(self.weight[i, j])) for i, j in zip(ii, jj)],
        }


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and at punctuation boundaries."""
    return _WORD.findall(text.lower())


def _window(window) -> list[int]:
    return list(window)


def build_speaker_graph(dialogue: Dialogue, window: Sequence[int]) -> Adjacency:
    nodes = _window(window)
    spk = np.array([dialogue[i].speaker for i in nodes], dtype=object)
    w = (spk[:, None] == spk[None, :]).astype(np.float64)
    np.fill_diagonal(w, 1.0)
    return Adjacency("S", w, tuple(nodes))


def detect_mentions(utterance: Utterance, speakers: Iterable[str]) -> set[str]:
    by_lower: dict[str, set[str]] = {}
    for s in speakers:
        by_lower.setdefault(s.lower(), set()).add(s)
    found: set[str] = set()
    for tok in utterance.text.split():
        low = tok.lower()
        for cand in (low, low.strip(_PUNCT)):
            if cand in by_lower:
                found |= by_lower[cand]
    found.discard(utterance.speaker)
    return found


def mention_matrix(dialogue: Dialogue) -> np.ndarray:
    """``out[i, j]`` is true when the text of ``i`` mentions the speaker of ``j``."""
    speakers = set(dialogue.speakers)
    mentions = [detect_mentions(u, speakers) for u in dialogue.utterances]
    spk = dialogue.speakers
    n = len(dialogue)
    out = np.zeros((n, n), dtype=bool)
    for i in range(n):
        if mentions[i]:
            for j in range(n):
                out[i, j] = spk[j] in mentions[i]
    return out


def build_mention_graph(dialogue: Dialogue, window: Sequence[int], mentions: np.ndarray | None = None) -> Adjacency:
    nodes = _window(window)
    if mentions is None:
        mentions = mention_matrix(dialogue)
    sub = mentions[np.ix_(nodes, nodes)]
    w = (sub | sub.T).astype(np.float64)
    np.fill_diagonal(w, 1.0)
    return Adjacency("M", w, tuple(nodes))


def gaussian_prior(d: int) -> float:
    if d < 0:
        raise ValueError("distance must be non-negative")
    return math.exp(-math.pi * d * d)


def distance_log_weights(h, biaffine: BiaffineParams, positions: np.ndarray,
                         node_mask: np.ndarray | None = None) -> ag.Tensor:
    """Log of the distance structure weights; diagonal entries are log 1 = 0.

    ``h`` is (..., M, d), ``positions`` (..., M) utterance indices.  Masked-out
    entries are 0 and must be ignored by the caller.
    """
    positions = np.asarray(positions, dtype=np.float64)
    diff = positions[..., :, None] - positions[..., None, :]
    dist = np.abs(diff)
    off = dist > 0
    if node_mask is not None:
        node_mask = np.asarray(node_mask, dtype=bool)
        off = off & node_mask[..., :, None] & node_mask[..., None, :]
    inv_sqrt = np.where(off, 1.0 / np.sqrt(np.where(off, dist, 1.0)), 0.0)
    biaf = biaffine_matrix(h, h, biaffine)
    logits = ag.add(-(diff ** 2) / DIST_SCALE, ag.mul(biaf, inv_sqrt))
    return ag.masked_log_softmax(logits, off, axis=-1)


def distance_weights(embeddings, biaffine: BiaffineParams, nodes: Sequence[int] | None = None) -> Adjacency:
    emb = ag.as_tensor(embeddings)
    m = emb.shape[-2]
    d = emb.shape[-1]
    if biaffine.W.shape != (d + 1, d + 1):
        raise ValueError(f"biaffine shape {biaffine.W.shape} does not match embedding dim {d}")
    nodes = tuple(range(m)) if nodes is None else tuple(nodes)
    logw = distance_log_weights(emb, biaffine, np.asarray(nodes))
    w = np.exp(logw.data)
    off = ~np.eye(m, dtype=bool)
    w = np.where(off, w, 1.0)
    if m == 1:
        w = np.ones((1, 1))
    return Adjacency("D", w, nodes)


def build_reply_graph(pairs: Iterable[tuple[int, int]], window: Sequence[int]) -> Adjacency:
    nodes = _window(window)
    pos = {u: k for k, u in enumerate(nodes)}
    w = np.eye(len(nodes))
    for c, p in pairs:
        if c in pos and p in pos:
            w[pos[c], pos[p]] = 1.0
            w[pos[p], pos[c]] = 1.0
    return Adjacency("R", w, tuple(nodes))


def corrupt_replies(gold: Iterable[tuple[int, int]], rate: float, rng_seed=None,
                    window: int = 50) -> set[tuple[int, int]]:
    """Replace each parent, with probability ``rate``, by a random wrong in-window candidate.

    Candidates for child ``c`` are ``(c - window, c]``, self included.  Pairs
    with no alternative candidate are kept as they are.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    out = set()
    for c, p in sorted(gold):
        if rng.random() < rate:
            alts = [j for j in candidate_window(c, window) if j != p]
            if alts:
                p = alts[int(rng.integers(len(alts)))]
        out.add((c, p))
    return out
