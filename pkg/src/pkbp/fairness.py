"""Interpretable link classifier and its explanations.

The graph is flattened to one row per person (binary presence features plus
the linked/unlinked target), a random forest is trained on it, and the
forest is explained three ways: local linear surrogates on flipped copies of
a row, Shapley values against a background table, and permutation
importance for the protected attributes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import pandas as pd

from .graph import PropertyGraph
from .numcore import InvalidArgument, derive_seed

DEFAULT_PROTECTED = ("gender", "age", "ethnicity", "location", "religion")
MAX_EXACT_FEATURES = 15
LABEL_NAMES = {0: "one or more persons linked", 1: "no relation"}


class ExplanationError(RuntimeError):
    pass


# ---- trees -----------------------------------------------------------------------

@dataclass
class Tree:
    feature: np.ndarray    # -1 marks a leaf
    threshold: np.ndarray  # go left when x[feature] <= threshold
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray     # nodes x classes, training counts reaching each node

    def leaf_of(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=int)
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            rows = np.flatnonzero(inner)
            go_left = X[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        c = self.counts[self.leaf_of(X)]
        return c / c.sum(axis=1, keepdims=True)


def _gini(counts: np.ndarray) -> np.ndarray:
    n = counts.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / n[..., None]
    return np.where(n > 0, 1.0 - np.nansum(p * p, axis=-1), 0.0)


def best_split(X: np.ndarray, Y: np.ndarray, features: Iterable[int]) -> tuple[int, float, float]:
    """Highest Gini gain over ``features``; ``Y`` is one-hot.  Returns (feature, threshold, gain),
    feature -1 if nothing splits.  Ties go to the earlier feature, then the lower threshold."""
    n = len(X)
    parent = _gini(Y.sum(axis=0))
    best = (-1, 0.0, 0.0)
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cum = np.cumsum(Y[order], axis=0)
        cut = np.flatnonzero(xs[1:] > xs[:-1])  # split after position cut
        if cut.size == 0:
            continue
        left = cum[cut]
        right = cum[-1] - left
        nl = (cut + 1).astype(float)
        gain = parent - (nl * _gini(left) + (n - nl) * _gini(right)) / n
        j = int(np.argmax(gain))
        if gain[j] > best[2] + 1e-12:
            best = (int(f), float((xs[cut[j]] + xs[cut[j] + 1]) / 2), float(gain[j]))
    return best


def grow_tree(X: np.ndarray, y: np.ndarray, n_classes: int, max_depth: int,
              max_features: int, gen: np.random.Generator) -> Tree:
    Y = np.eye(n_classes)[y]
    d = X.shape[1]
    feature, threshold, left, right, counts = [], [], [], [], []

    def node(rows: np.ndarray, depth: int) -> int:
        nid = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(Y[rows].sum(axis=0))
        if depth >= max_depth or len(rows) < 2 or np.count_nonzero(counts[nid]) < 2:
            return nid
        tried = gen.permutation(d)
        f, thr, gain = best_split(X[rows], Y[rows], sorted(tried[:max_features]))
        if f < 0:
            # no positive gain inside the subsample; fall back to the remaining features
            f, thr, gain = best_split(X[rows], Y[rows], sorted(tried[max_features:]))
        if f < 0:
            return nid
        go_left = X[rows, f] <= thr
        feature[nid], threshold[nid] = f, thr
        left[nid] = node(rows[go_left], depth + 1)
        right[nid] = node(rows[~go_left], depth + 1)
        return nid

    node(np.arange(len(X)), 0)
    return Tree(np.array(feature), np.array(threshold), np.array(left), np.array(right), np.array(counts))


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 8
    max_features: int | None = None  # default ceil(sqrt(d))
    bootstrap: bool = True


@dataclass
class ForestModel:
    trees: list[Tree]
    classes: np.ndarray
    feature_names: list[str]
    params: ForestParams
    seed: int
    feature_subsample: int = 0

    def predict_proba(self, X) -> np.ndarray:
        X = _as_array(X)
        return np.mean([t.predict_proba(X) for t in self.trees], axis=0)

    def predict(self, X) -> np.ndarray:
        return self.classes[np.argmax(self.predict_proba(X), axis=1)]


def _as_array(X) -> np.ndarray:
    return np.asarray(X.to_numpy() if isinstance(X, pd.DataFrame) else X, dtype=np.float64)


def train_forest(table, labels, params: ForestParams = ForestParams(), seed: int = 0) -> ForestModel:
    X = _as_array(table)
    names = list(table.columns) if isinstance(table, pd.DataFrame) else [f"x{j}" for j in range(X.shape[1])]
    classes, y = np.unique(np.asarray(labels), return_inverse=True)
    if len(classes) < 2:
        raise InvalidArgument("labels contain a single class")
    if len(X) != len(y):
        raise InvalidArgument(f"{len(X)} rows but {len(y)} labels")
    d = X.shape[1]
    k = params.max_features or max(1, math.ceil(math.sqrt(d)))
    trees = []
    for t in range(params.n_trees):
        gen = np.random.default_rng(derive_seed(seed, f"forest/tree/{t}"))
        rows = gen.integers(0, len(X), len(X)) if params.bootstrap else np.arange(len(X))
        trees.append(grow_tree(X[rows], y[rows], len(classes), params.max_depth, min(k, d), gen))
    return ForestModel(trees, classes, names, params, seed, min(k, d))


def train_tree(table, labels, max_depth: int = 8, seed: int = 0) -> ForestModel:
    """A single unbagged tree that sees every feature at every split."""
    d = _as_array(table).shape[1]
    return train_forest(table, labels, ForestParams(1, max_depth, d, False), seed)


# ---- reports -------------------------------------------------------------------------

def report_from_predictions(y_true, y_pred, classes: Sequence | None = None) -> dict:
    """Per-class one-vs-rest precision/recall/F1, then macro and support-weighted means.

    A class that is never predicted gets precision 0.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    classes = list(np.unique(np.concatenate([y_true, y_pred]))) if classes is None else list(classes)
    out: dict = {}
    rows = []
    for c in classes:
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        fp = int(np.sum((y_pred == c) & (y_true != c)))
        fn = int(np.sum((y_pred != c) & (y_true == c)))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        rows.append((p, r, f, tp + fn))
        out[str(c)] = {"precision": p, "recall": r, "f1": f, "support": tp + fn}
    arr = np.array(rows, dtype=float)
    support = arr[:, 3]
    out["macro avg"] = dict(zip(("precision", "recall", "f1"), map(float, arr[:, :3].mean(axis=0))))
    out["macro avg"]["support"] = int(support.sum())
    w = support / support.sum() if support.sum() else np.zeros_like(support)
    out["weighted avg"] = dict(zip(("precision", "recall", "f1"), map(float, w @ arr[:, :3])))
    out["weighted avg"]["support"] = int(support.sum())
    out["accuracy"] = float(np.mean(y_true == y_pred)) if len(y_true) else 0.0
    return out


def classification_report(m: ForestModel, table, labels) -> dict:
    return report_from_predictions(np.asarray(labels), m.predict(table), m.classes)


# ---- explanations ------------------------------------------------------------------------

Predictor = Callable[[np.ndarray], np.ndarray]


def positive_probability(model, class_label=1) -> Predictor:
    """Turn a fitted forest (or any callable) into ``X -> P(class_label | X)``."""
    if isinstance(model, ForestModel):
        j = int(np.flatnonzero(model.classes == class_label)[0])
        return lambda X: model.predict_proba(X)[:, j]
    return lambda X: np.asarray(model(np.asarray(X, dtype=np.float64)), dtype=np.float64)


@dataclass
class ExplanationReport:
    method: str
    feature_names: list[str]
    weights: np.ndarray
    base: float           # surrogate intercept (lime) or expected value (shap)
    score: float          # fidelity R^2 (lime) or efficiency residual (shap)
    samples: np.ndarray | None = None
    sample_weights: np.ndarray | None = None
    targets: np.ndarray | None = None

    def as_dict(self) -> dict:
        key = "fidelity" if self.method == "lime" else "efficiency_residual"
        return {"method": self.method, "base": self.base, key: self.score,
                "weights": dict(zip(self.feature_names, map(float, self.weights)))}


def _names(model, d: int, feature_names: Sequence[str] | None) -> list[str]:
    if feature_names is not None:
        return list(feature_names)
    if isinstance(model, ForestModel):
        return list(model.feature_names)
    return [f"x{j}" for j in range(d)]


def lime_explain(model, row, n_samples: int = 1000, kernel_width: float | None = None,
                 seed: int = 0, feature_names: Sequence[str] | None = None) -> ExplanationReport:
    """Weighted linear surrogate around a binary row.

    Each perturbation flips every feature independently with probability 1/2
    (the first sample is the row itself); a sample with ``h`` flips gets
    weight ``exp(-h / kernel_width^2)``.
    """
    if n_samples < 50:
        raise InvalidArgument("n_samples must be >= 50")
    x = np.asarray(row, dtype=np.float64).ravel()
    d = x.size
    width = kernel_width if kernel_width is not None else 0.75 * math.sqrt(d)
    gen = np.random.default_rng(seed)
    flips = gen.random((n_samples, d)) < 0.5
    flips[0] = False
    Z = np.where(flips, 1.0 - x, x)
    if np.all(Z == Z[0]):
        raise ExplanationError("all perturbations are identical")
    w = np.exp(-flips.sum(axis=1) / width**2)
    f = positive_probability(model)(Z)
    A = np.column_stack([np.ones(n_samples), Z])
    sw = np.sqrt(w)
    beta, *_ = np.linalg.lstsq(A * sw[:, None], f * sw, rcond=None)
    resid = f - A @ beta
    mean = np.sum(w * f) / np.sum(w)
    total = np.sum(w * (f - mean) ** 2)
    r2 = 1.0 - np.sum(w * resid**2) / total if total > 0 else 1.0
    return ExplanationReport("lime", _names(model, d, feature_names), beta[1:], float(beta[0]), float(r2),
                             Z, w, f)


class _Coalitions:
    """Memoized ``v(S)``: mean prediction with the features in ``S`` from the row, the rest from background."""

    def __init__(self, fn: Predictor, x: np.ndarray, background: np.ndarray):
        self.fn, self.x, self.bg = fn, x, background
        self.cache: dict[int, float] = {}

    def masks(self, masks: Sequence[int]) -> None:
        todo = list(dict.fromkeys(mk for mk in masks if mk not in self.cache))
        if not todo:
            return
        d = self.x.size
        step = max(1, 20000 // len(self.bg))
        for start in range(0, len(todo), step):
            chunk = todo[start:start + step]
            bits = (np.array(chunk)[:, None] >> np.arange(d)) & 1          # chunk x d
            X = np.where(bits[:, None, :] == 1, self.x[None, None, :], self.bg[None, :, :])
            vals = self.fn(X.reshape(-1, d)).reshape(len(chunk), len(self.bg)).mean(axis=1)
            self.cache.update(zip(chunk, map(float, vals)))

    def __call__(self, mask: int) -> float:
        if mask not in self.cache:
            self.masks([mask])
        return self.cache[mask]


def shap_values(model, row, background, mode: str = "exact", seed: int = 0,
                n_permutations: int = 1000, feature_names: Sequence[str] | None = None) -> ExplanationReport:
    x = np.asarray(row, dtype=np.float64).ravel()
    bg = _as_array(background)
    if bg.ndim != 2 or len(bg) == 0:
        raise InvalidArgument("background must be a nonempty table")
    d = x.size
    v = _Coalitions(positive_probability(model), x, bg)
    full = (1 << d) - 1
    phi = np.zeros(d)
    if mode == "exact":
        if d > MAX_EXACT_FEATURES:
            raise InvalidArgument(f"exact mode supports at most {MAX_EXACT_FEATURES} features, "
                                  f"got {d}; use mode='montecarlo'")
        v.masks(list(range(full + 1)))
        fact = [math.factorial(k) for k in range(d + 1)]
        for mask in range(full + 1):
            size = bin(mask).count("1")
            for i in range(d):
                if mask >> i & 1:
                    continue
                phi[i] += fact[size] * fact[d - size - 1] / fact[d] * (v(mask | 1 << i) - v(mask))
    elif mode == "montecarlo":
        gen = np.random.default_rng(seed)
        perms = [gen.permutation(d) for _ in range(n_permutations)]
        prefixes = [np.cumsum(1 << p.astype(np.int64)).tolist() for p in perms]
        v.masks([0] + [mk for pre in prefixes for mk in pre])  # one batched pass
        for p, pre in zip(perms, prefixes):
            prev = v(0)
            for i, mask in zip(p, pre):
                cur = v(mask)
                phi[i] += cur - prev
                prev = cur
        phi /= n_permutations
    else:
        raise InvalidArgument(f"unknown mode {mode!r}")
    base = v(0)
    residual = abs(base + phi.sum() - v(full))
    return ExplanationReport("shap", _names(model, d, feature_names), phi, base, float(residual))


# ---- protected-attribute audit ---------------------------------------------------------------

def _groups(columns: Sequence[str], feature: str) -> list[int]:
    """Columns belonging to ``feature``: an exact name or ``feature=<value>`` one-hot columns."""
    return [j for j, c in enumerate(columns) if c == feature or str(c).startswith(feature + "=")]


def permutation_importance(model: ForestModel, table: pd.DataFrame, labels, seed: int = 0,
                           n_repeats: int = 10, features: Sequence[str] | None = None) -> dict[str, float]:
    """Mean accuracy drop when a feature's columns are shuffled together across rows."""
    X = _as_array(table)
    y = np.asarray(labels)
    columns = list(table.columns)
    features = list(features) if features is not None else columns
    base = np.mean(model.predict(X) == y)
    out = {}
    for feat in features:
        cols = _groups(columns, feat)
        if not cols:
            raise InvalidArgument(f"feature {feat!r} not in table")
        gen = np.random.default_rng(derive_seed(seed, f"permutation/{feat}"))
        drops = []
        for _ in range(n_repeats):
            Xp = X.copy()
            Xp[:, cols] = X[gen.permutation(len(X))][:, cols]
            drops.append(base - np.mean(model.predict(Xp) == y))
        out[feat] = float(np.mean(drops))
    return out


def audit_protected(model: ForestModel, table: pd.DataFrame, labels,
                    protected: Sequence[str] = DEFAULT_PROTECTED, seed: int = 0,
                    n_repeats: int = 10) -> dict:
    """Rank every feature by permutation importance and flag protected ones in the top quartile.

    A feature with zero or negative importance is never flagged, whatever its rank.
    """
    columns = list(table.columns)
    missing = [p for p in protected if not _groups(columns, p)]
    if missing:
        raise InvalidArgument(f"protected features not in table: {missing}")
    features = sorted({c.split("=", 1)[0] for c in columns} | set(protected))
    imp = permutation_importance(model, table, labels, seed, n_repeats, features)
    ranked = sorted(features, key=lambda f: (-imp[f], f))
    rank = {f: i + 1 for i, f in enumerate(ranked)}
    cutoff = math.ceil(len(features) / 4)
    flags = {p: bool(rank[p] <= cutoff and imp[p] > 0) for p in protected}
    return {"importance": imp, "rank": rank, "top_quartile_cutoff": cutoff,
            "protected": list(protected), "flagged": flags}


# ---- graph tabularization and reporting --------------------------------------------------------

def link_table(g: PropertyGraph, attributes: Sequence[str], relations: Sequence[str] = ()) -> tuple[pd.DataFrame, np.ndarray]:
    """One row per person: 0/1 presence of each attribute (and of each relation, either
    direction), with target 0 when the person is linked to anyone and 1 otherwise."""
    nodes = sorted(g.nodes)
    deg = g.degree()
    data = {a: [int(bool(g.nodes[n].attributes.get(a))) for n in nodes] for a in attributes}
    touching: dict[str, set[int]] = {r: set() for r in relations}
    for e in g.edges.values():
        if e.relation in touching:
            touching[e.relation].update((e.src, e.dst))
    for r in relations:
        data[r] = [int(n in touching[r]) for n in nodes]
    df = pd.DataFrame(data, index=pd.Index(nodes, name="person_id"), columns=[*attributes, *relations])
    return df, np.array([0 if deg[n] else 1 for n in nodes])


def fairness_report(model: ForestModel, table: pd.DataFrame, labels, protected: Sequence[str],
                    seed: int = 0, explain_rows: Sequence[int] = (0,), lime_samples: int = 500,
                    shap_mode: str | None = None, shap_permutations: int = 1000,
                    background_size: int = 50) -> dict:
    """Everything the audit produces, as one JSON-ready dictionary."""
    X = _as_array(table)
    report = {"classification": classification_report(model, table, labels),
              "lime": {}, "shap": {}}
    present = [p for p in protected if _groups(list(table.columns), p)]
    report["audit"] = audit_protected(model, table, labels, present, derive_seed(seed, "audit")) if present else {}
    bg_rows = np.random.default_rng(derive_seed(seed, "shap/background")).permutation(len(X))[:background_size]
    mode = shap_mode or ("exact" if X.shape[1] <= 10 else "montecarlo")
    for i in explain_rows:
        pid = str(table.index[i])
        report["lime"][pid] = lime_explain(model, X[i], lime_samples, seed=derive_seed(seed, f"lime/{pid}")).as_dict()
        report["shap"][pid] = shap_values(model, X[i], X[np.sort(bg_rows)], mode, derive_seed(seed, f"shap/{pid}"),
                                          shap_permutations).as_dict()
    return report


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_report_csv(report: dict, path) -> None:
    """Flat ``section,key,field,value`` rows for spreadsheet inspection."""
    rows = []

    def walk(prefix: list[str], obj):
        if isinstance(obj, dict):
            for k in sorted(obj):
                walk(prefix + [str(k)], obj[k])
        elif isinstance(obj, list):
            rows.append(prefix + ["|".join(map(str, obj))])
        else:
            rows.append(prefix + [obj])

    walk([], report)
    width = max(len(r) for r in rows)
    frame = pd.DataFrame([r[:-1] + [""] * (width - len(r)) + [r[-1]] for r in rows])
    frame.to_csv(path, index=False, header=False, lineterminator="\n")
