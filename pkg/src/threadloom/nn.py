"""Differentiable scoring blocks: biaffine, edge-aware GCN, BiLSTM with DropConnect, FFNN.

All functions accept arrays with arbitrary leading batch dimensions; node
windows live on axis -2 and features on axis -1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor


@dataclass
class BiaffineParams:
    W: Tensor  # (k+1, k+1), augmented-1 convention


@dataclass
class EgcnLayerParams:
    W: Tensor      # (2d + a, d): rows ordered [r_i ; r_j ; a]
    b: Tensor      # (d,)
    agg: Tensor    # (d + a + 1, d + a + 1) aggregation biaffine
    label: Tensor  # (a,) edge-label embedding, shared across layers of a kind


@dataclass
class LstmDirection:
    W: Tensor  # (d_in, 4h) input weights, gate blocks ordered i, f, o, c
    U: Tensor  # (h, 4h) recurrent weights
    b: Tensor  # (4h,)


@dataclass
class LstmParams:
    fwd: LstmDirection
    bwd: LstmDirection
    # DropConnect masks over U, one per direction; None means all-ones
    mask_fwd: np.ndarray | None = None
    mask_bwd: np.ndarray | None = None

    @property
    def hidden(self) -> int:
        return self.fwd.U.shape[0]

    def sample_masks(self, p: float, rng: np.random.Generator) -> None:
        shape = self.fwd.U.shape
        self.mask_fwd = (rng.random(shape) >= p).astype(np.float64)
        self.mask_bwd = (rng.random(shape) >= p).astype(np.float64)

    def clear_masks(self) -> None:
        self.mask_fwd = None
        self.mask_bwd = None


@dataclass
class FfnnParams:
    W1: Tensor  # (3d, h2)
    b1: Tensor  # (h2,)
    W2: Tensor  # (h2, 1)
    b2: Tensor  # (1,)


ACTIVATIONS = {"relu": ag.relu, "tanh": ag.tanh}


# -- biaffine ---------------------------------------------------------------

def _augment(x) -> Tensor:
    x = ag.as_tensor(x)
    ones = np.ones(x.shape[:-1] + (1,))
    return ag.concat([x, ones], axis=-1)


def biaffine(h_i, h_j, params: BiaffineParams) -> Tensor:
    """Scalar ``[h_i;1]^T W [h_j;1]`` for two vectors."""
    h_i, h_j = ag.as_tensor(h_i), ag.as_tensor(h_j)
    k = params.W.shape[0]
    if h_i.shape != (k - 1,) or h_j.shape != (k - 1,):
        raise ValueError(f"biaffine expects vectors of length {k - 1}, got {h_i.shape} and {h_j.shape}")
    xi = ag.reshape(_augment(h_i), (1, k))
    xj = ag.reshape(_augment(h_j), (k, 1))
    return ag.reshape(xi @ params.W @ xj, ())


def biaffine_matrix(X, Y, params: BiaffineParams) -> Tensor:
    """All-pairs biaffine: (..., M, k) x (..., M', k) -> (..., M, M')."""
    X, Y = ag.as_tensor(X), ag.as_tensor(Y)
    k = params.W.shape[0]
    if X.shape[-1] != k - 1 or Y.shape[-1] != k - 1:
        raise ValueError(f"biaffine expects feature size {k - 1}, got {X.shape[-1]} / {Y.shape[-1]}")
    xa, ya = _augment(X), _augment(Y)
    return (xa @ params.W) @ ag.swapaxes(ya, -1, -2)


# -- edge-aware GCN ---------------------------------------------------------

def egcn_layer(r, weights, params: EgcnLayerParams, log_weights=None, mask=None) -> Tensor:
    """One edge-aware graph convolution step.

    ``weights`` holds non-negative edge strengths (..., M, M) and may be an
    Adjacency.  When ``log_weights`` is given it replaces ``log(weights)`` and
    ``mask`` marks the edges that exist.
    """
    r = ag.as_tensor(r)
    if hasattr(weights, "weight"):
        weights = weights.weight
    d = r.shape[-1]
    m = r.shape[-2]
    if log_weights is None:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape[-2:] != (m, m):
            raise ValueError(f"adjacency of size {w.shape[-2:]} for {m} nodes")
        mask = w > 0
        with np.errstate(divide="ignore"):
            log_weights = np.where(mask, np.log(np.where(mask, w, 1.0)), 0.0)
    mask = np.asarray(mask, dtype=bool)
    if not np.all(mask.any(axis=-1)):
        raise ValueError("node with zero total edge mass")
    a = params.label
    a_nodes = ag.mul(np.ones(r.shape[:-1] + (1,)), a)
    x = ag.concat([r, a_nodes, np.ones(r.shape[:-1] + (1,))], axis=-1)
    agg = (x @ params.agg) @ ag.swapaxes(x, -1, -2)
    pi = ag.masked_softmax(ag.add(agg, log_weights), mask, axis=-1)
    W_self, W_nbr, W_lab = params.W[:d], params.W[d:2 * d], params.W[2 * d:]
    # rows of pi sum to one, so sum_j pi_ij (W [r_i; r_j; a] + b) splits into three terms
    const = ag.add(ag.reshape(ag.reshape(a, (1, -1)) @ W_lab, (-1,)), params.b)
    pre = ag.add(ag.add(r @ W_self, pi @ (r @ W_nbr)), const)
    return ag.sigmoid(pre)


def fuse_graphs(*outputs) -> Tensor:
    if not outputs:
        raise ValueError("nothing to fuse")
    acc = ag.as_tensor(outputs[0])
    for o in outputs[1:]:
        acc = ag.add(acc, o)
    return acc


# -- BiLSTM -----------------------------------------------------------------

def _run_direction(xw: Tensor, p: LstmDirection, mask_u, reverse: bool, valid: np.ndarray | None):
    T = xw.shape[-2]
    h = p.U.shape[0]
    U = p.U if mask_u is None else ag.mul(p.U, mask_u)
    batch = xw.shape[:-2]
    h_t = Tensor(np.zeros(batch + (h,)))
    c_t = Tensor(np.zeros(batch + (h,)))
    outs: list[Tensor | None] = [None] * T
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        z = ag.add(xw[..., t, :], h_t @ U)
        gates = ag.sigmoid(z[..., :3 * h])
        g = ag.tanh(z[..., 3 * h:])
        i_g, f_g, o_g = gates[..., :h], gates[..., h:2 * h], gates[..., 2 * h:]
        c_t = ag.add(ag.mul(f_g, c_t), ag.mul(i_g, g))
        h_t = ag.mul(o_g, ag.tanh(c_t))
        if reverse and valid is not None:
            # padding sits at the tail, so the reverse pass must start from zeros
            m = valid[..., t:t + 1]
            if not m.all():
                c_t = ag.mul(c_t, m)
                h_t = ag.mul(h_t, m)
        outs[t] = h_t
    return ag.stack(outs, axis=-2)


def bilstm(seq, params: LstmParams, valid: np.ndarray | None = None) -> Tensor:
    """(..., T, d) -> (..., T, 2h); ``valid`` marks real (non-padded) steps, padding at the tail."""
    seq = ag.as_tensor(seq)
    T = seq.shape[-2]
    if T == 0:
        return Tensor(np.zeros(seq.shape[:-1] + (2 * params.hidden,)))
    if valid is not None:
        valid = np.asarray(valid, dtype=np.float64)
    xf = ag.add(seq @ params.fwd.W, params.fwd.b)
    xb = ag.add(seq @ params.bwd.W, params.bwd.b)
    hf = _run_direction(xf, params.fwd, params.mask_fwd, False, valid)
    hb = _run_direction(xb, params.bwd, params.mask_bwd, True, valid)
    return ag.concat([hf, hb], axis=-1)


def residual_concat(h, v) -> Tensor:
    return ag.concat([h, v], axis=-1)


def ffnn_score(hhat, params: FfnnParams, activation: str = "relu", dropout_mask=None) -> Tensor:
    hidden = ACTIVATIONS[activation](ag.add(ag.as_tensor(hhat) @ params.W1, params.b1))
    if dropout_mask is not None:
        hidden = ag.mul(hidden, dropout_mask)
    out = ag.add(hidden @ params.W2, params.b2)
    return out[..., 0]


def softmax_candidates(scores, mask) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise ValueError("all candidates masked")
    z = np.where(mask, s, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    return e / e.sum(axis=-1, keepdims=True)
