"""Deterministic pair features and the trainable affine pair encoder.

The dense layout of a pair feature vector (length ``2B + 12``) is::

    [candidate hashed counts (B) | current hashed counts (B) |
     log1p(shared) | same_speaker | cand_mentions_cur | cur_mentions_cand |
     distance bucket one-hot (7) | log1p(raw distance)]

Tokens are hashed with CRC-32 of their UTF-8 bytes modulo ``B``.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .corpus import Dialogue, Utterance
from .graphs import detect_mentions, tokenize

FEATURE_SCHEMA = "pairfeat-v1"
MAX_TOKENS = 128
DEFAULT_BUCKETS = 2048
BUCKETS = ("1", "2", "3-5", "6-10", "11-20", "21+", "self")
N_DENSE = 5 + len(BUCKETS)


def feature_dim(buckets: int) -> int:
    return 2 * buckets + N_DENSE


def distance_bucket(dist: int) -> int:
    if dist == 0:
        return 6
    if dist <= 2:
        return dist - 1
    if dist <= 5:
        return 2
    if dist <= 10:
        return 3
    if dist <= 20:
        return 4
    return 5


def token_hash(token: str, buckets: int) -> int:
    return zlib.crc32(token.encode("utf-8")) % buckets


def hashed_counts(tokens: list[str], buckets: int) -> dict[int, int]:
    out: dict[int, int] = {}
    for t in tokens[:MAX_TOKENS]:
        h = token_hash(t, buckets)
        out[h] = out.get(h, 0) + 1
    return out


def _words(tokens: list[str]) -> set[str]:
    return {t for t in tokens[:MAX_TOKENS] if t[0].isalnum() or t[0] == "_"}


@dataclass
class PairFeatures:
    cand_counts: dict[int, int]
    cur_counts: dict[int, int]
    shared: int
    same_speaker: int
    cand_mentions_cur: int
    cur_mentions_cand: int
    bucket: int
    distance: int
    buckets: int = DEFAULT_BUCKETS

    def dense_tail(self) -> np.ndarray:
        tail = np.zeros(N_DENSE)
        tail[0] = np.log1p(self.shared)
        tail[1] = self.same_speaker
        tail[2] = self.cand_mentions_cur
        tail[3] = self.cur_mentions_cand
        tail[4 + self.bucket] = 1.0
        tail[4 + len(BUCKETS)] = np.log1p(self.distance)
        return tail

    def dense(self) -> np.ndarray:
        B = self.buckets
        vec = np.zeros(feature_dim(B))
        for h, c in self.cand_counts.items():
            vec[h] = c
        for h, c in self.cur_counts.items():
            vec[B + h] = c
        vec[2 * B:] = self.dense_tail()
        return vec


@dataclass
class EncoderParams:
    proj: Tensor  # (2B + 12, d)
    bias: Tensor  # (d,)

    @property
    def buckets(self) -> int:
        return (self.proj.shape[0] - N_DENSE) // 2


def featurize_pair(u_i: Utterance, u_c: Utterance, dialogue: Dialogue | None = None,
                   buckets: int = DEFAULT_BUCKETS, speakers=None) -> PairFeatures:
    if u_i.index > u_c.index:
        raise ValueError("candidate must not come after the current utterance")
    if speakers is None:
        speakers = set(dialogue.speakers) if dialogue is not None else {u_i.speaker, u_c.speaker}
    ti, tc = tokenize(u_i.text), tokenize(u_c.text)
    dist = u_c.index - u_i.index
    return PairFeatures(
        cand_counts=hashed_counts(ti, buckets),
        cur_counts=hashed_counts(tc, buckets),
        shared=len(_words(ti) & _words(tc)),
        same_speaker=int(u_i.speaker == u_c.speaker),
        cand_mentions_cur=int(u_c.speaker in detect_mentions(u_i, speakers)),
        cur_mentions_cand=int(u_i.speaker in detect_mentions(u_c, speakers)),
        bucket=distance_bucket(dist),
        distance=dist,
        buckets=buckets,
    )


def encode_pair(features: PairFeatures, params: EncoderParams) -> Tensor:
    x = features.dense()
    if x.shape[0] != params.proj.shape[0]:
        raise ValueError(f"feature length {x.shape[0]} does not match projection rows {params.proj.shape[0]}")
    return ag.add(ag.reshape(ag.matmul(x.reshape(1, -1), params.proj), (-1,)), params.bias)


class PreparedDialogue:
    """Per-dialogue feature cache used by the batched encoder.

    ``counts`` is (n, B) hashed counts; ``tail[i, c]`` is the dense tail of pair
    (i, c) for i <= c.
    """

    def __init__(self, dialogue: Dialogue, buckets: int = DEFAULT_BUCKETS):
        from .graphs import mention_matrix

        self.dialogue = dialogue
        self.buckets = buckets
        n = len(dialogue)
        toks = [tokenize(u.text) for u in dialogue.utterances]
        words = [_words(t) for t in toks]
        self.counts = np.zeros((n, buckets))
        for i, t in enumerate(toks):
            for h, c in hashed_counts(t, buckets).items():
                self.counts[i, h] = c
        spk = np.array(dialogue.speakers, dtype=object)
        self.same_speaker = spk[:, None] == spk[None, :]
        self.mentions = mention_matrix(dialogue)
        self.tail = np.zeros((n, n, N_DENSE))
        for c in range(n):
            for i in range(c + 1):
                dist = c - i
                row = self.tail[i, c]
                row[0] = np.log1p(len(words[i] & words[c]))
                row[1] = float(self.same_speaker[i, c])
                row[2] = float(self.mentions[i, c])
                row[3] = float(self.mentions[c, i])
                row[4 + distance_bucket(dist)] = 1.0
                row[4 + len(BUCKETS)] = np.log1p(dist)

    def __len__(self) -> int:
        return len(self.dialogue)


def encode_all_pairs(prep: PreparedDialogue, params: EncoderParams) -> Tensor:
    """Pair vectors for every (i, c): entry [i, c] is valid for i <= c.  Shape (n, n, d)."""
    B = prep.buckets
    if params.buckets != B:
        raise ValueError("encoder bucket count differs from prepared features")
    P = params.proj
    cand = prep.counts @ P[:B]            # (n, d), candidate slot
    cur = prep.counts @ P[B:2 * B]        # (n, d), current slot
    tail = prep.tail @ P[2 * B:]          # (n, n, d)
    n = len(prep)
    grid = ag.add(ag.add(ag.reshape(cand, (n, 1, -1)), ag.reshape(cur, (1, n, -1))), tail)
    return ag.add(grid, params.bias)
