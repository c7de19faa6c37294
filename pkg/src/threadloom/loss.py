"""Hierarchical ranking loss over the R1..R4 candidate levels."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .corpus import CandidateLevels


@dataclass(frozen=True)
class HrlWeights:
    alpha1: float = 1.0
    alpha2: float = 0.1
    alpha3: float = 0.05

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "alpha3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def _grouped(scores: Tensor, num: np.ndarray, den: np.ndarray) -> Tensor:
    """-log(sum_num e^S / sum_den e^S) per row; rows with empty numerator give 0."""
    has = num.any(axis=-1)
    lse_num = ag.masked_logsumexp(scores, num, axis=-1)
    lse_den = ag.masked_logsumexp(scores, den & has[..., None], axis=-1)
    return ag.sub(lse_den, lse_num)


def batched_level_losses(scores, levels: np.ndarray) -> tuple[Tensor, Tensor, Tensor]:
    """``scores`` (N, M), ``levels`` (4, N, M) booleans -> per-row (L1, L2, L3)."""
    scores = ag.as_tensor(scores)
    r1, r2, r3, r4 = levels
    l1 = _grouped(scores, r1, r1 | r2 | r3 | r4)
    l2 = _grouped(scores, r2, r2 | r3 | r4)
    l3 = _grouped(scores, r3, r3 | r4)
    return l1, l2, l3


def level_losses(scores, levels: CandidateLevels, candidates=None):
    """Losses for one current utterance.

    ``scores`` maps candidate index -> S(c, i), or is a sequence aligned with
    ``candidates``.
    """
    if isinstance(scores, Mapping):
        candidates = list(scores)
        vec = ag.stack([ag.as_tensor(scores[j]) for j in candidates])
    else:
        vec = ag.as_tensor(scores)
        if candidates is None:
            raise ValueError("candidates required when scores is a sequence")
        candidates = list(candidates)
    if not candidates:
        raise ValueError("empty candidate set")
    covered = set().union(*levels.as_tuple())
    if set(candidates) != covered:
        raise ValueError("scores must cover exactly the in-window candidates")
    masks = np.array([[j in s for j in candidates] for s in levels.as_tuple()])
    l1, l2, l3 = batched_level_losses(ag.reshape(vec, (1, -1)), masks[:, None, :])
    return ag.reshape(l1, ()), ag.reshape(l2, ()), ag.reshape(l3, ())


def total_loss(l1, l2, l3, weights: HrlWeights = HrlWeights()) -> Tensor:
    return ag.add(ag.add(ag.mul(l1, weights.alpha1), ag.mul(l2, weights.alpha2)), ag.mul(l3, weights.alpha3))
