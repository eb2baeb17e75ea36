"""Missing-link prediction over the person graph.

Two small numpy models share one training loop:

* ``GCN``: two rounds of symmetric-normalized aggregation (self-loops added)
  with a ReLU in between.
* ``PGNN``: position-aware embeddings.  Each node exchanges messages with a
  set of random anchor sets; a message from anchor ``a`` is weighted by
  ``1 / (d(v, a) + 1)`` with ``d`` the BFS distance in the training graph, so
  the output coordinates encode where a node sits, not just what its
  neighbourhood looks like.

Pairs are scored by ``sigmoid(z_u . z_v + b)`` and trained with the logistic
loss on positive and sampled negative pairs.  Gradients are written out by
hand and applied with full-batch Adam.
"""

from __future__ import annotations

import json
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graph import PropertyGraph
from .numcore import InvalidArgument, derive_seed

MODEL_KINDS = ("GCN", "PGNN")
PREDICTED_RELATION = "per:linked"

Pair = tuple[int, int]


class TrainingError(RuntimeError):
    def __init__(self, epoch: int, message: str = "loss is not finite"):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


@dataclass(frozen=True)
class EdgeSplit:
    train_pos: list[Pair]
    test_pos: list[Pair]
    train_neg: list[Pair]
    test_neg: list[Pair]
    seed: int

    def test_pairs(self) -> tuple[list[Pair], np.ndarray]:
        pairs = self.test_pos + self.test_neg
        return pairs, np.array([1] * len(self.test_pos) + [0] * len(self.test_neg))


@dataclass(frozen=True)
class NodeFeatures:
    matrix: np.ndarray
    source: str  # "attribute-one-hot" or "constant"


@dataclass(frozen=True)
class Hyperparams:
    hidden: int = 16
    out_dim: int = 16
    lr: float = 0.01
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.hidden < 1 or self.out_dim < 1:
            raise InvalidArgument("layer sizes must be positive")
        if self.lr <= 0:
            raise InvalidArgument("learning rate must be positive")
        if self.epochs < 0:
            raise InvalidArgument("epochs must be >= 0")


@dataclass
class LinkModel:
    kind: str
    params: dict[str, np.ndarray]
    hyperparams: Hyperparams
    embeddings: np.ndarray
    anchor_sets: list[np.ndarray] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return self.embeddings.shape[0]


# ---- data preparation ----------------------------------------------------

def _node_index(g: PropertyGraph) -> dict[int, int]:
    return {nid: i for i, nid in enumerate(sorted(g.nodes))}


def split_edges(g: PropertyGraph, test_fraction: float = 0.2, seed: int = 0) -> EdgeSplit:
    """Shuffle the undirected person pairs and sample as many non-edges."""
    if not 0 < test_fraction < 1:
        raise InvalidArgument("test_fraction must lie in (0, 1)")
    pos = sorted(g.linked_pairs())
    if len(pos) < 2:
        raise InvalidArgument(f"need at least 2 edges to split, got {len(pos)}")
    nodes = sorted(g.nodes)
    n = len(nodes)
    linked = set(pos)
    non_edges = [(nodes[i], nodes[j]) for i in range(n) for j in range(i + 1, n)
                 if (nodes[i], nodes[j]) not in linked]
    if len(non_edges) < len(pos):
        raise InvalidArgument(f"only {len(non_edges)} non-edges for {len(pos)} positives")
    gen = np.random.default_rng(seed)
    pos = [pos[i] for i in gen.permutation(len(pos))]
    neg = [non_edges[i] for i in gen.choice(len(non_edges), size=len(pos), replace=False)]
    n_test = min(len(pos) - 1, max(1, round(test_fraction * len(pos))))
    return EdgeSplit(pos[n_test:], pos[:n_test], neg[n_test:], neg[:n_test], seed)


def node_features(g: PropertyGraph, top: int = 10) -> NodeFeatures:
    """One-hot of the ``top`` most frequent (attribute, value) pairs plus a constant column."""
    index = _node_index(g)
    counts = Counter((k, v) for node in g.nodes.values() for k, vals in node.attributes.items() for v in vals)
    common = [kv for kv, _ in sorted(counts.items(), key=lambda kc: (-kc[1], kc[0]))[:top]]
    X = np.zeros((len(index), len(common) + 1))
    X[:, -1] = 1.0
    for nid, i in index.items():
        attrs = g.nodes[nid].attributes
        for j, (k, v) in enumerate(common):
            if v in attrs.get(k, ()):
                X[i, j] = 1.0
    return NodeFeatures(X, "attribute-one-hot")


def constant_features(n: int) -> NodeFeatures:
    return NodeFeatures(np.ones((n, 1)), "constant")


def _adjacency(n: int, pairs: Iterable[Pair]) -> np.ndarray:
    A = np.zeros((n, n))
    for u, v in pairs:
        A[u, v] = A[v, u] = 1.0
    return A


def _normalized_adjacency(A: np.ndarray) -> np.ndarray:
    A = A + np.eye(A.shape[0])
    d = 1.0 / np.sqrt(A.sum(axis=1))
    return A * d[:, None] * d[None, :]


def bfs_distances(A: np.ndarray) -> np.ndarray:
    """All-pairs hop distances (``inf`` when unreachable)."""
    n = A.shape[0]
    nbrs = [np.flatnonzero(A[i]) for i in range(n)]
    D = np.full((n, n), np.inf)
    for s in range(n):
        D[s, s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for w in nbrs[u]:
                if D[s, w] == np.inf:
                    D[s, w] = D[s, u] + 1
                    queue.append(w)
    return D


def anchor_sets(n: int, seed: int) -> list[np.ndarray]:
    """``ceil(log2(n)^2)`` random node sets whose sizes halve, ``n/2, n/4, ...``, cyclically."""
    c = max(1, math.ceil(math.log2(max(n, 2))))
    count = max(1, math.ceil(math.log2(max(n, 2)) ** 2))
    gen = np.random.default_rng(seed)
    out = []
    for t in range(count):
        size = max(1, round(n / 2 ** (1 + t % c)))
        out.append(np.sort(gen.choice(n, size=size, replace=False)))
    return out


# ---- models ------------------------------------------------------------------

def _glorot(gen: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    limit = math.sqrt(6.0 / (shape[0] + shape[-1]))
    return gen.uniform(-limit, limit, size=shape)


class _GCN:
    def __init__(self, X, train_pos, hp, gen):
        n = X.shape[0]
        self.A_hat = _normalized_adjacency(_adjacency(n, train_pos))
        self.P = self.A_hat @ X
        self.params = {"W1": _glorot(gen, (X.shape[1], hp.hidden)),
                       "W2": _glorot(gen, (hp.hidden, hp.out_dim)),
                       "b": np.zeros(1)}

    def forward(self, params):
        Hpre = self.P @ params["W1"]
        H = np.maximum(Hpre, 0.0)
        Q = self.A_hat @ H
        return Q @ params["W2"], (Hpre, Q)

    def backward(self, params, cache, dZ):
        Hpre, Q = cache
        dH = self.A_hat.T @ (dZ @ params["W2"].T)
        dHpre = dH * (Hpre > 0)
        return {"W1": self.P.T @ dHpre, "W2": Q.T @ dZ}


class _PGNN:
    def __init__(self, X, train_pos, hp, gen, anchors):
        n, f = X.shape
        D = bfs_distances(_adjacency(n, train_pos))
        S = np.where(np.isinf(D), 0.0, 1.0 / (D + 1.0))
        # M[v, k] = mean over a in S_k of s(v, a) * [x_v ; x_a]
        M = np.zeros((n, len(anchors), 2 * f))
        for k, aset in enumerate(anchors):
            w = S[:, aset]                                   # n x |S_k|
            M[:, k, :f] = w.mean(axis=1)[:, None] * X
            M[:, k, f:] = (w @ X[aset]) / len(aset)
        self.M = M
        self.params = {"W1": _glorot(gen, (2 * f, hp.hidden)),
                       "w2": _glorot(gen, (hp.hidden, 1))[:, 0],
                       "b": np.zeros(1)}

    def forward(self, params):
        Hpre = self.M @ params["W1"]                         # n x K x h
        H = np.maximum(Hpre, 0.0)
        return H @ params["w2"], (Hpre, H)                   # n x K

    def backward(self, params, cache, dZ):
        Hpre, H = cache
        dw2 = np.einsum("nkh,nk->h", H, dZ)
        dHpre = dZ[:, :, None] * params["w2"][None, None, :] * (Hpre > 0)
        return {"W1": np.einsum("nkf,nkh->fh", self.M, dHpre), "w2": dw2}


def _pair_arrays(pairs: Sequence[Pair], index: dict[int, int]) -> tuple[np.ndarray, np.ndarray]:
    u = np.array([index[a] for a, _ in pairs], dtype=int)
    v = np.array([index[b] for _, b in pairs], dtype=int)
    return u, v


def _loss_and_grad_logits(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    # numerically stable mean binary cross-entropy
    loss = np.mean(np.maximum(logits, 0) - logits * y + np.log1p(np.exp(-np.abs(logits))))
    p = 0.5 * (1 + np.tanh(0.5 * logits))
    return float(loss), (p - y) / len(y)


def train_link_model(kind: str, g: PropertyGraph, split: EdgeSplit, features: NodeFeatures,
                     hyperparams: Hyperparams = Hyperparams()) -> LinkModel:
    if kind not in MODEL_KINDS:
        raise InvalidArgument(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    index = _node_index(g)
    X = np.asarray(features.matrix, dtype=np.float64)
    if X.shape[0] != len(index):
        raise InvalidArgument(f"features have {X.shape[0]} rows for {len(index)} nodes")
    hp = hyperparams
    gen = np.random.default_rng(derive_seed(hp.seed, f"linkpred/{kind}/init"))
    train_pos = [(index[a], index[b]) for a, b in split.train_pos]
    anchors: list[np.ndarray] = []
    if kind == "GCN":
        net = _GCN(X, train_pos, hp, gen)
    else:
        anchors = anchor_sets(len(index), derive_seed(hp.seed, "linkpred/PGNN/anchors"))
        net = _PGNN(X, train_pos, hp, gen, anchors)

    pairs = split.train_pos + split.train_neg
    u, v = _pair_arrays(pairs, index)
    y = np.array([1.0] * len(split.train_pos) + [0.0] * len(split.train_neg))
    params = net.params
    m = {k: np.zeros_like(p) for k, p in params.items()}
    s = {k: np.zeros_like(p) for k, p in params.items()}
    b1, b2, eps = 0.9, 0.999, 1e-8
    losses = []
    for epoch in range(hp.epochs + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            Z, cache = net.forward(params)
            logits = np.einsum("ij,ij->i", Z[u], Z[v]) + params["b"][0]
            loss, dlogit = _loss_and_grad_logits(logits, y)
        if not np.isfinite(loss):
            raise TrainingError(epoch)
        losses.append(loss)
        if epoch == hp.epochs:
            break
        dZ = np.zeros_like(Z)
        np.add.at(dZ, u, dlogit[:, None] * Z[v])
        np.add.at(dZ, v, dlogit[:, None] * Z[u])
        grads = net.backward(params, cache, dZ)
        grads["b"] = np.array([dlogit.sum()])
        t = epoch + 1
        for k in params:
            m[k] = b1 * m[k] + (1 - b1) * grads[k]
            s[k] = b2 * s[k] + (1 - b2) * grads[k] ** 2
            params[k] = params[k] - hp.lr * (m[k] / (1 - b1**t)) / (np.sqrt(s[k] / (1 - b2**t)) + eps)
    Z, _ = net.forward(params)
    return LinkModel(kind, params, hp, Z, anchors, losses)


# ---- scoring and evaluation ----------------------------------------------------

def score_pairs(m: LinkModel, pairs: Iterable[Pair]) -> np.ndarray:
    """``sigmoid(z_u . z_v + b)`` for node-id pairs (ids are positions in sorted node order)."""
    pairs = list(pairs)
    for a, b in pairs:
        if a == b:
            raise InvalidArgument(f"self-link ({a}, {b})")
        if not (0 <= a < m.n_nodes and 0 <= b < m.n_nodes):
            raise InvalidArgument(f"unknown node in pair ({a}, {b})")
    if not pairs:
        return np.zeros(0)
    u = np.array([a for a, _ in pairs])
    v = np.array([b for _, b in pairs])
    Z = m.embeddings
    logits = np.einsum("ij,ij->i", Z[u], Z[v]) + m.params["b"][0]
    return 0.5 * (1 + np.tanh(0.5 * logits))


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with ties counted as 1/2 (average ranks)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise InvalidArgument("scores and labels differ in length")
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise InvalidArgument("roc_auc needs both classes")
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    avg_rank = upper - (counts - 1) / 2.0
    rank_sum = avg_rank[inverse][pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def augment_with_predictions(g: PropertyGraph, m: LinkModel, threshold: float) -> PropertyGraph:
    """Copy of ``g`` plus a predicted edge for every unlinked pair scoring >= ``threshold``."""
    if not 0 < threshold <= 1:
        raise InvalidArgument("threshold must lie in (0, 1]")
    out = g.copy()
    nodes = sorted(g.nodes)
    if len(nodes) != m.n_nodes:
        raise InvalidArgument(f"model covers {m.n_nodes} nodes, graph has {len(nodes)}")
    linked = g.linked_pairs()
    cand = [(i, j) for i in range(len(nodes)) for j in range(i + 1, len(nodes))
            if (nodes[i], nodes[j]) not in linked]
    for (i, j), sc in zip(cand, score_pairs(m, cand)):
        if sc >= threshold:
            out.add_edge(nodes[i], nodes[j], PREDICTED_RELATION, "predicted", float(sc))
    return out


def evaluate_split(m: LinkModel, g: PropertyGraph, split: EdgeSplit) -> float:
    index = _node_index(g)
    pairs, labels = split.test_pairs()
    return roc_auc(score_pairs(m, [(index[a], index[b]) for a, b in pairs]), labels)


def benchmark(g: PropertyGraph, features: NodeFeatures, seeds: Sequence[int],
              hyperparams: Hyperparams = Hyperparams(), test_fraction: float = 0.2,
              kinds: Sequence[str] = MODEL_KINDS) -> list[dict]:
    """Test AUC of each model kind over repeated seeded splits and initializations."""
    out = []
    for kind in kinds:
        aucs = []
        for seed in seeds:
            split = split_edges(g, test_fraction, derive_seed(seed, "linkpred/split"))
            hp = Hyperparams(hyperparams.hidden, hyperparams.out_dim, hyperparams.lr, hyperparams.epochs, seed)
            aucs.append(evaluate_split(train_link_model(kind, g, split, features, hp), g, split))
        out.append({"model": kind, "roc_auc": float(np.mean(aucs)), "std_dev": float(np.std(aucs)),
                    "seeds": list(seeds), "per_seed": [float(a) for a in aucs]})
    return out


def write_metrics(results: list[dict], path) -> None:
    Path(path).write_text(json.dumps(results, indent=2) + "\n", encoding="utf-8")


def barbell(clique: int = 10, path: int = 3) -> PropertyGraph:
    """Two ``clique``-cliques whose end nodes are joined by a path of ``path`` extra nodes."""
    pairs = [(i, j) for i in range(clique) for j in range(i + 1, clique)]
    off = clique + path
    pairs += [(off + i, off + j) for i in range(clique) for j in range(i + 1, clique)]
    chain = [clique - 1, *range(clique, clique + path), off]
    pairs += list(zip(chain, chain[1:]))
    return PropertyGraph.from_pairs(2 * clique + path, pairs)
