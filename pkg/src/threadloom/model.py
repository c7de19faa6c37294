"""The full scorer: pair encoder -> four EGCN stacks -> BiLSTM -> residual -> FFNN."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .corpus import Dialogue, ReplyForest, candidate_levels, candidate_window, derive_sessions
from .encoder import FEATURE_SCHEMA, EncoderParams, PreparedDialogue, encode_all_pairs, feature_dim
from .graphs import KINDS, distance_log_weights
from .loss import HrlWeights, batched_level_losses
from .nn import (BiaffineParams, EgcnLayerParams, FfnnParams, LstmDirection, LstmParams,
                 bilstm, egcn_layer, ffnn_score, fuse_graphs, residual_concat)


@dataclass
class ModelConfig:
    hidden: int = 64            # d
    label_dim: int = 10         # a
    egcn_layers: int = 2        # L
    ffnn_hidden: int = 32
    buckets: int = 2048
    window: int = 50            # omega
    dropout: float = 0.2
    activation: str = "relu"
    graphs: tuple[str, ...] = KINDS
    seed: int = 0

    def __post_init__(self):
        self.graphs = tuple(self.graphs)
        unknown = set(self.graphs) - set(KINDS)
        if unknown:
            raise ValueError(f"unknown graph kinds {sorted(unknown)}")
        if self.window < 1:
            raise ValueError("window must be >= 1")


# Graph layers start with gradients one to two orders of magnitude below the LSTM's;
# a larger start shortens the plateau before the graph paths begin to matter.
EGCN_INIT_GAIN = 2.0


def _init(rng: np.random.Generator, shape, scale: float | None = None, gain: float = 1.0) -> Tensor:
    if scale is None:
        fan_in = shape[0] if len(shape) > 1 else 1
        fan_out = shape[-1]
        scale = np.sqrt(2.0 / (fan_in + fan_out))
    return Tensor(rng.normal(0.0, gain * scale, size=shape), requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


@dataclass
class Batch:
    """Padded numpy inputs for N scoring instances with up to M nodes each."""

    children: list[int]
    owner: list[int]                 # which prepared dialogue each instance belongs to
    nodes: list[list[int]]
    gather: np.ndarray               # (N, M) flat index into the concatenated pair grids
    future: np.ndarray               # (N, M, 1) node after the current utterance
    positions: np.ndarray            # (N, M)
    node_mask: np.ndarray            # (N, M)
    cand_mask: np.ndarray            # (N, M)
    adj: dict[str, np.ndarray] = field(default_factory=dict)  # S, M, R: (N, M, M)


class DisentangleModel:
    def __init__(self, config: ModelConfig | None = None, init: bool = True):
        self.config = config or ModelConfig()
        self.params: dict[str, Tensor] = {}
        if init:
            self._init_params(np.random.default_rng(self.config.seed))

    # -- parameters --------------------------------------------------------
    def _init_params(self, rng: np.random.Generator) -> None:
        cfg = self.config
        d, a, h2 = cfg.hidden, cfg.label_dim, cfg.ffnn_hidden
        F = feature_dim(cfg.buckets)
        p = self.params
        p["encoder.proj"] = _init(rng, (F, d), scale=0.1)
        p["encoder.bias"] = _zeros((d,))
        p["encoder.future"] = _init(rng, (d,), scale=0.1)
        p["dist.W"] = _init(rng, (d + 1, d + 1), scale=0.1 / np.sqrt(d))
        for t in KINDS:
            g = EGCN_INIT_GAIN
            p[f"egcn.{t}.label"] = _init(rng, (a,), scale=0.1, gain=g)
            for l in range(cfg.egcn_layers):
                p[f"egcn.{t}.{l}.W"] = _init(rng, (2 * d + a, d), gain=g)
                p[f"egcn.{t}.{l}.b"] = _zeros((d,))
                p[f"egcn.{t}.{l}.agg"] = _init(rng, (d + a + 1, d + a + 1), scale=0.1 / np.sqrt(d + a), gain=g)
        for side in ("fwd", "bwd"):
            p[f"lstm.{side}.W"] = _init(rng, (d, 4 * d))
            p[f"lstm.{side}.U"] = _init(rng, (d, 4 * d))
            b = np.zeros(4 * d)
            b[d:2 * d] = 1.0  # forget-gate bias
            p[f"lstm.{side}.b"] = Tensor(b, requires_grad=True)
        p["ffnn.W1"] = _init(rng, (3 * d, h2))
        p["ffnn.b1"] = _zeros((h2,))
        p["ffnn.W2"] = _init(rng, (h2, 1))
        p["ffnn.b2"] = _zeros((1,))

    @property
    def encoder(self) -> EncoderParams:
        return EncoderParams(self.params["encoder.proj"], self.params["encoder.bias"])

    @property
    def dist_biaffine(self) -> BiaffineParams:
        return BiaffineParams(self.params["dist.W"])

    def egcn(self, kind: str, layer: int) -> EgcnLayerParams:
        p = self.params
        return EgcnLayerParams(p[f"egcn.{kind}.{layer}.W"], p[f"egcn.{kind}.{layer}.b"],
                               p[f"egcn.{kind}.{layer}.agg"], p[f"egcn.{kind}.label"])

    def lstm(self) -> LstmParams:
        p = self.params
        mk = lambda s: LstmDirection(p[f"lstm.{s}.W"], p[f"lstm.{s}.U"], p[f"lstm.{s}.b"])
        return LstmParams(mk("fwd"), mk("bwd"))

    @property
    def ffnn(self) -> FfnnParams:
        p = self.params
        return FfnnParams(p["ffnn.W1"], p["ffnn.b1"], p["ffnn.W2"], p["ffnn.b2"])

    def active_param_names(self) -> list[str]:
        """Parameters that can receive gradient under the configured graph set."""
        names = []
        for k in self.params:
            if k.startswith("egcn."):
                if k.split(".")[1] not in self.config.graphs:
                    continue
            if k == "dist.W" and "D" not in self.config.graphs:
                continue
            names.append(k)
        return names

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    # -- batching ----------------------------------------------------------
    def node_window(self, c: int, n: int) -> list[int]:
        w = self.config.window
        return list(range(max(0, c - w + 1), min(n, c + w)))

    def build_batch(self, preps: Sequence[PreparedDialogue], instances: Sequence[tuple[int, int, Iterable]]) -> Batch:
        """``instances`` holds (dialogue slot, current index, reply pairs visible to the R graph)."""
        w = self.config.window
        offsets = np.cumsum([0] + [len(p) ** 2 for p in preps])
        node_lists = [self.node_window(c, len(preps[k])) for k, c, _ in instances]
        N = len(instances)
        M = max(len(nl) for nl in node_lists)
        gather = np.zeros((N, M), dtype=np.int64)
        future = np.zeros((N, M, 1))
        positions = np.zeros((N, M))
        node_mask = np.zeros((N, M), dtype=bool)
        cand_mask = np.zeros((N, M), dtype=bool)
        adj = {t: np.zeros((N, M, M)) for t in ("S", "M", "R")}
        for r, ((k, c, pairs), nodes) in enumerate(zip(instances, node_lists)):
            prep = preps[k]
            n = len(prep)
            m = len(nodes)
            nd = np.asarray(nodes)
            lo = np.minimum(nd, c)
            hi = np.maximum(nd, c)
            gather[r, :m] = offsets[k] + lo * n + hi
            gather[r, m:] = offsets[k]
            future[r, :m, 0] = nd > c
            positions[r, :m] = nd
            positions[r, m:] = nd[-1] + 1 + np.arange(M - m)
            node_mask[r, :m] = True
            cand_mask[r, :m] = (nd <= c) & (nd > c - w)
            ix = np.ix_(nodes, nodes)
            adj["S"][r, :m, :m] = prep.same_speaker[ix]
            sub = prep.mentions[ix]
            adj["M"][r, :m, :m] = sub | sub.T
            pos = {u: q for q, u in enumerate(nodes)}
            R = adj["R"][r]
            for cc, pp in pairs:
                if cc in pos and pp in pos:
                    R[pos[cc], pos[pp]] = 1.0
                    R[pos[pp], pos[cc]] = 1.0
            for t in adj:
                np.fill_diagonal(adj[t][r], 1.0)
        owner = [k for k, _, _ in instances]
        return Batch([c for _, c, _ in instances], owner, node_lists, gather, future, positions,
                     node_mask, cand_mask, adj)

    # -- forward -----------------------------------------------------------
    def forward(self, preps: Sequence[PreparedDialogue], batch: Batch, train: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        """Scores (N, M); only entries under ``batch.cand_mask`` are meaningful."""
        cfg = self.config
        p = self.params
        grids = [ag.reshape(encode_all_pairs(prep, self.encoder), (len(prep) ** 2, -1)) for prep in preps]
        flat = grids[0] if len(grids) == 1 else ag.concat(grids, axis=0)
        V = ag.add(flat[batch.gather], ag.mul(batch.future, p["encoder.future"]))
        drop = train and cfg.dropout > 0
        if drop:
            keep = 1.0 - cfg.dropout
            V = ag.mul(V, (rng.random(V.shape) < keep) / keep)
        outs = []
        valid_pair = batch.node_mask[:, :, None] & batch.node_mask[:, None, :]
        for t in cfg.graphs:
            if t == "D":
                logw = distance_log_weights(V, self.dist_biaffine, batch.positions, batch.node_mask)
                mask = valid_pair | np.eye(V.shape[-2], dtype=bool)[None]
            else:
                logw = np.zeros(batch.adj[t].shape)
                mask = batch.adj[t] > 0
            r = V
            for l in range(cfg.egcn_layers):
                r = egcn_layer(r, None, self.egcn(t, l), log_weights=logw, mask=mask)
            outs.append(r)
        fused = fuse_graphs(*outs) if outs else V
        lstm = self.lstm()
        if drop:
            lstm.sample_masks(cfg.dropout, rng)
        H = bilstm(fused, lstm, valid=batch.node_mask)
        hhat = residual_concat(H, V)
        dmask = None
        if drop:
            keep = 1.0 - cfg.dropout
            dmask = (rng.random(hhat.shape[:-1] + (cfg.ffnn_hidden,)) < keep) / keep
        return ffnn_score(hhat, self.ffnn, cfg.activation, dmask)

    # -- training objective --------------------------------------------------
    def level_masks(self, batch: Batch, forests: Sequence[ReplyForest]) -> np.ndarray:
        """(4, N, M) boolean masks of R1..R4 per instance, computed from gold forests."""
        N, M = batch.node_mask.shape
        out = np.zeros((4, N, M), dtype=bool)
        parts = {}
        for r, (k, c, nodes) in enumerate(zip(batch.owner, batch.children, batch.nodes)):
            forest = forests[k]
            if k not in parts:
                parts[k] = derive_sessions(forest)
            lv = candidate_levels(c, forest, parts[k], self.config.window)
            pos = {u: q for q, u in enumerate(nodes)}
            for L, s in enumerate(lv.as_tuple()):
                for j in s:
                    out[L, r, pos[j]] = True
        return out

    def loss(self, scores: Tensor, levels: np.ndarray, weights: HrlWeights, use_l2: bool = True,
             use_l3: bool = True):
        l1, l2, l3 = batched_level_losses(scores, levels)
        N = scores.shape[0]
        total = ag.mul(ag.tsum(l1), weights.alpha1 / N)
        if use_l2 and weights.alpha2:
            total = ag.add(total, ag.mul(ag.tsum(l2), weights.alpha2 / N))
        if use_l3 and weights.alpha3:
            total = ag.add(total, ag.mul(ag.tsum(l3), weights.alpha3 / N))
        parts = (float(l1.data.mean()), float(l2.data.mean()) if use_l2 else 0.0,
                 float(l3.data.mean()) if use_l3 else 0.0)
        return total, parts

    # -- inference -----------------------------------------------------------
    def prepare(self, dialogue: Dialogue) -> PreparedDialogue:
        return PreparedDialogue(dialogue, self.config.buckets)

    def score_children(self, prep: PreparedDialogue, resolved: Iterable[tuple[int, int]],
                       children: Sequence[int]) -> dict[int, tuple[list[int], np.ndarray]]:
        """Eval-mode scores: child -> (candidate indices, scores)."""
        if not children:
            return {}
        pairs = set(resolved)
        batch = self.build_batch([prep], [(0, c, pairs) for c in children])
        S = self.forward([prep], batch, train=False).data
        out = {}
        for r, c in enumerate(children):
            idx = np.nonzero(batch.cand_mask[r])[0]
            out[c] = ([batch.nodes[r][q] for q in idx], S[r, idx].copy())
        return out

    # -- persistence ---------------------------------------------------------
    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def save(self, path, extra: dict | None = None) -> None:
        meta = {
            "format": "threadloom-checkpoint",
            "feature_schema": FEATURE_SCHEMA,
            "model_config": asdict(self.config),
            "shapes": {k: list(v.shape) for k, v in self.params.items()},
        }
        if extra:
            meta.update(extra)
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **self.state_arrays())

    @classmethod
    def load(cls, path) -> tuple["DisentangleModel", dict]:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["__meta__"]))
            if meta.get("feature_schema") != FEATURE_SCHEMA:
                raise ValueError(f"checkpoint feature schema {meta.get('feature_schema')!r} != {FEATURE_SCHEMA!r}")
            cfg_fields = {f.name for f in fields(ModelConfig)}
            cfg = ModelConfig(**{k: v for k, v in meta["model_config"].items() if k in cfg_fields})
            model = cls(cfg, init=False)
            for k in meta["shapes"]:
                model.params[k] = Tensor(z[k], requires_grad=True)
        return model, meta
