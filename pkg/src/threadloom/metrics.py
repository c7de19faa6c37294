"""Disentanglement metrics over gold / predicted session partitions and reply forests."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus import ReplyForest, SessionPartition, derive_sessions

DEFAULT_SIZE_BUCKETS = ((1, 4), (5, 9), (10, 19), (20, None))


@dataclass
class ContingencyTable:
    counts: np.ndarray  # (gold clusters, predicted clusters)

    @property
    def a(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def b(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def _labels(x) -> np.ndarray:
    if isinstance(x, SessionPartition):
        return np.asarray(x.labels())
    if isinstance(x, ReplyForest):
        return np.asarray(derive_sessions(x).labels())
    return np.asarray(x)


def contingency(gold, pred) -> ContingencyTable:
    g, p = _labels(gold), _labels(pred)
    if g.shape != p.shape:
        raise ValueError(f"partitions cover {g.size} and {p.size} items")
    _, gi = np.unique(g, return_inverse=True)
    _, pi = np.unique(p, return_inverse=True)
    table = np.zeros((gi.max() + 1 if g.size else 0, pi.max() + 1 if p.size else 0), dtype=np.int64)
    np.add.at(table, (gi, pi), 1)
    return ContingencyTable(table)


def _entropy(counts: np.ndarray, n: int) -> float:
    c = counts[counts > 0].astype(np.float64)
    return float(-(c / n * np.log(c / n)).sum())


def _pairs(x) -> int:
    return int(sum(int(v) * (int(v) - 1) // 2 for v in np.asarray(x).ravel()))


def ari_from_table(t: ContingencyTable) -> float:
    # integer pair counts with a single final division, so small cases come out exact
    n = t.n
    if n < 2:
        return 1.0
    sum_ij, sa, sb, total = _pairs(t.counts), _pairs(t.a), _pairs(t.b), n * (n - 1) // 2
    num = 2 * (total * sum_ij - sa * sb)
    den = total * (sa + sb) - 2 * sa * sb
    if den == 0:
        return 1.0
    return num / den


def ari(gold, pred) -> float:
    return ari_from_table(contingency(gold, pred))


def scaled_vi(gold, pred) -> float:
    t = contingency(gold, pred)
    n = t.n
    if n <= 1:
        return 1.0
    hxy = _entropy(t.counts.ravel(), n)
    vi = 2 * hxy - _entropy(t.a, n) - _entropy(t.b, n)
    return 1.0 - vi / math.log(n)


def nmi(gold, pred) -> float:
    t = contingency(gold, pred)
    n = t.n
    hx, hy = _entropy(t.a, n), _entropy(t.b, n)
    if hx == 0.0 or hy == 0.0:
        return 0.0
    mi = hx + hy - _entropy(t.counts.ravel(), n)
    return float(2.0 * mi / (hx + hy))


def one_to_one(gold, pred) -> float:
    t = contingency(gold, pred)
    if t.n == 0:
        return 1.0
    rows, cols = linear_sum_assignment(t.counts, maximize=True)
    return float(t.counts[rows, cols].sum() / t.n)


def local_k(gold, pred, k: int = 3) -> float:
    g, p = _labels(gold), _labels(pred)
    agree = total = 0
    for j in range(1, k + 1):
        if j >= g.size:
            break
        same_g = g[j:] == g[:-j]
        same_p = p[j:] == p[:-j]
        agree += int((same_g == same_p).sum())
        total += same_g.size
    return 1.0 if total == 0 else agree / total


def shen_f(gold, pred, printed_form: bool = False) -> float:
    """Size-weighted best-match F over gold clusters.

    ``printed_form`` squares the overlap in the numerator instead of using it linearly.
    """
    t = contingency(gold, pred)
    n = t.n
    if n == 0:
        return 1.0
    nij = t.counts.astype(np.float64)
    num = 2.0 * nij ** 2 if printed_form else 2.0 * nij
    f = num / (t.a[:, None] + t.b[None, :])
    return float((t.a / n * f.max(axis=1)).sum())


def prf(tp: int, n_pred: int, n_gold: int) -> tuple[float, float, float]:
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def _clusters(x) -> set[frozenset]:
    if isinstance(x, SessionPartition):
        return set(x.clusters)
    if isinstance(x, ReplyForest):
        return set(derive_sessions(x).clusters)
    return set(SessionPartition.from_labels(list(x)).clusters)


def exact_cluster_counts(gold, pred) -> tuple[int, int, int]:
    g, p = _clusters(gold), _clusters(pred)
    return len(g & p), len(p), len(g)


def exact_clusters(gold, pred) -> tuple[float, float, float]:
    return prf(*exact_cluster_counts(gold, pred))


def link_set(forest: ReplyForest, include_self: bool = False) -> set[tuple[int, int]]:
    return {(c, p) for c, p in enumerate(forest.parent) if include_self or c != p}


def exact_link_counts(gold: ReplyForest, pred: ReplyForest, include_self: bool = False) -> tuple[int, int, int]:
    g, p = link_set(gold, include_self), link_set(pred, include_self)
    return len(g & p), len(p), len(g)


def exact_links(gold: ReplyForest, pred: ReplyForest, include_self: bool = False) -> tuple[float, float, float]:
    return prf(*exact_link_counts(gold, pred, include_self))


def bucket_name(bucket) -> str:
    lo, hi = bucket
    return f"{lo}+" if hi is None else f"{lo}-{hi}"


def partial_ari_table(gold, pred, bucket) -> ContingencyTable | None:
    """Gold clusters with size in ``bucket`` against the predicted clusters touching them."""
    g, p = _labels(gold), _labels(pred)
    lo, hi = bucket
    gl, gc = np.unique(g, return_counts=True)
    keep = {lab for lab, c in zip(gl, gc) if c >= lo and (hi is None or c <= hi)}
    if not keep:
        return None
    sel = np.array([lab in keep for lab in g])
    return contingency(g[sel], p[sel])


def partial_ari(gold, pred, size_buckets=DEFAULT_SIZE_BUCKETS) -> dict[str, float]:
    out = {}
    for bucket in size_buckets:
        t = partial_ari_table(gold, pred, bucket)
        if t is not None:
            out[bucket_name(bucket)] = ari_from_table(t)
    return out


CLUSTER_METRICS = ("scaled_vi", "ari", "nmi", "one_to_one", "local_3", "shen_f")


@dataclass
class MetricReport:
    scaled_vi: float
    ari: float
    nmi: float
    one_to_one: float
    local_3: float
    shen_f: float
    cluster_p: float
    cluster_r: float
    cluster_f1: float
    link_p: float
    link_r: float
    link_f1: float
    partial_ari: dict[str, float] = field(default_factory=dict)
    aggregation: str = "micro"
    n_dialogues: int = 1

    def to_json(self) -> dict:
        return asdict(self)

    def headline(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in CLUSTER_METRICS}


def evaluate_pair(gold: ReplyForest, pred: ReplyForest, include_self: bool = False,
                  size_buckets=DEFAULT_SIZE_BUCKETS, printed_shen: bool = False) -> MetricReport:
    gs, ps = derive_sessions(gold), derive_sessions(pred)
    cp, cr, cf = exact_clusters(gs, ps)
    lp, lr, lf = exact_links(gold, pred, include_self)
    return MetricReport(scaled_vi(gs, ps), ari(gs, ps), nmi(gs, ps), one_to_one(gs, ps),
                        local_k(gs, ps, 3), shen_f(gs, ps, printed_shen), cp, cr, cf, lp, lr, lf,
                        partial_ari(gs, ps, size_buckets), "single", 1)


def evaluate_corpus(pairs: Sequence[tuple[ReplyForest, ReplyForest]], mode: str = "micro",
                    include_self: bool = False, size_buckets=DEFAULT_SIZE_BUCKETS,
                    printed_shen: bool = False) -> MetricReport:
    """Corpus-level report.

    ``micro`` pools all dialogues into one block-diagonal contingency table
    (clusters never span dialogues) and sums exact-match and Local_k counts;
    ``macro`` averages per-dialogue scores.
    """
    if mode not in ("micro", "macro"):
        raise ValueError(f"unknown aggregation mode {mode!r}")
    if not pairs:
        raise ValueError("no dialogues to evaluate")
    if mode == "macro":
        reps = [evaluate_pair(g, p, include_self, size_buckets, printed_shen) for g, p in pairs]
        vals = {k: float(np.mean([getattr(r, k) for r in reps]))
                for k in CLUSTER_METRICS + ("cluster_p", "cluster_r", "cluster_f1", "link_p", "link_r", "link_f1")}
        par: dict[str, list[float]] = {}
        for r in reps:
            for b, v in r.partial_ari.items():
                par.setdefault(b, []).append(v)
        return MetricReport(**vals, partial_ari={b: float(np.mean(v)) for b, v in par.items()},
                            aggregation="macro", n_dialogues=len(pairs))
    g_lab, p_lab = [], []
    agree = total = 0
    ctp = cnp = cng = ltp = lnp = lng = 0
    for k, (g, p) in enumerate(pairs):
        gs, ps = derive_sessions(g), derive_sessions(p)
        g_lab += [(k, x) for x in gs.labels()]
        p_lab += [(k, x) for x in ps.labels()]
        gl, pl = np.asarray(gs.labels()), np.asarray(ps.labels())
        for j in range(1, 4):
            if j < gl.size:
                agree += int(((gl[j:] == gl[:-j]) == (pl[j:] == pl[:-j])).sum())
                total += gl.size - j
        a, b, c = exact_cluster_counts(gs, ps)
        ctp, cnp, cng = ctp + a, cnp + b, cng + c
        a, b, c = exact_link_counts(g, p, include_self)
        ltp, lnp, lng = ltp + a, lnp + b, lng + c
    gi = _codes(g_lab)
    pi = _codes(p_lab)
    cp, cr, cf = prf(ctp, cnp, cng)
    lp, lr, lf = prf(ltp, lnp, lng)
    return MetricReport(scaled_vi(gi, pi), ari(gi, pi), nmi(gi, pi), one_to_one(gi, pi),
                        1.0 if total == 0 else agree / total, shen_f(gi, pi, printed_shen),
                        cp, cr, cf, lp, lr, lf, partial_ari(gi, pi, size_buckets), "micro", len(pairs))


def _codes(labels: list) -> np.ndarray:
    index: dict = {}
    return np.array([index.setdefault(x, len(index)) for x in labels])


def format_table(report: MetricReport) -> str:
    rows = [(k, v) for k, v in report.to_json().items() if isinstance(v, float)]
    rows += [(f"partial_ari[{b}]", v) for b, v in report.partial_ari.items()]
    width = max(len(k) for k, _ in rows)
    lines = [f"{k.ljust(width)}  {100 * v:7.2f}" for k, v in rows]
    lines.append(f"{'aggregation'.ljust(width)}  {report.aggregation} ({report.n_dialogues} dialogues)")
    return "\n".join(lines)
