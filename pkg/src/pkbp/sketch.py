"""Representative-set sampling of person rows via frequent-directions sketches.

Pipeline: min-max scale / one-hot encode, merge correlated columns down to a
target width, cluster with k-means (k from the elbow of the within-cluster
sum of squares), then inside each cluster repeatedly

1. sketch the remaining rows and take the sketch rows as directions,
2. pick the row with the highest cosine to each direction,
3. drop every remaining row whose cosine to the pick is at least ``theta``,

until the cluster is exhausted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .graph import MISSING
from .numcore import InvalidArgument, as_matrix, cosine_matrix, derive_seed, svd


@dataclass(frozen=True)
class SketchConfig:
    sketch_rows: int = 8
    theta: float = 0.85
    target_dim: int = 100
    k_max: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.sketch_rows < 2:
            raise InvalidArgument("sketch_rows must be >= 2")
        if not 0 < self.theta < 1:
            raise InvalidArgument("theta must lie in (0, 1)")
        if self.target_dim < 1:
            raise InvalidArgument("target_dim must be >= 1")


@dataclass
class EncodedTable:
    matrix: np.ndarray
    row_ids: list
    # one entry per column: the (source attribute, category or "numeric") pairs merged into it
    column_meta: list[tuple[tuple[str, str], ...]]


def scale_and_encode(table: pd.DataFrame, text_columns: Sequence[str] = (),
                     missing: str = MISSING) -> EncodedTable:
    """Min-max scale numeric columns, one-hot the rest, drop ``text_columns``.

    Missing categorical values (``NaN`` or the missing marker) are one more
    category, so every one-hot group sums to exactly 1 in every row.  Sparse
    rows therefore look alike, which is what lets redundancy pruning collapse
    them.
    """
    if len(table) == 0:
        raise InvalidArgument("table has no rows")
    cols: list[np.ndarray] = []
    meta: list[tuple[tuple[str, str], ...]] = []
    for name in table.columns:
        if name in text_columns:
            continue
        series = table[name]
        if pd.api.types.is_bool_dtype(series) or pd.api.types.is_numeric_dtype(series):
            x = series.astype(float).to_numpy()
            x = np.where(np.isnan(x), np.nanmin(x) if np.any(~np.isnan(x)) else 0.0, x)
            lo, hi = x.min(), x.max()
            cols.append((x - lo) / (hi - lo) if hi > lo else np.zeros_like(x))
            meta.append(((str(name), "numeric"),))
            continue
        values = series.astype(object).where(series.notna(), missing)
        for cat in sorted({str(v) for v in values}):
            cols.append((values.astype(str) == cat).to_numpy(dtype=float))
            meta.append(((str(name), cat),))
    matrix = np.column_stack(cols) if cols else np.zeros((len(table), 0))
    return EncodedTable(matrix, list(table.index), meta)


def _standardize(X: np.ndarray) -> np.ndarray:
    Z = X - X.mean(axis=0)
    norms = np.linalg.norm(Z, axis=0)
    return np.divide(Z, norms, out=np.zeros_like(Z), where=norms > 0)


def agglomerate_features(E: EncodedTable, target_dim: int) -> EncodedTable:
    """Greedily merge the most |Pearson|-correlated pair of column groups until
    ``target_dim`` groups remain; each output column is its group's mean."""
    if target_dim < 1:
        raise InvalidArgument("target_dim must be >= 1")
    X = E.matrix
    d = X.shape[1]
    if d <= target_dim:
        return E
    groups = [[j] for j in range(d)]
    current = X.copy()
    Z = _standardize(current)
    C = np.abs(Z.T @ Z)
    while len(groups) > target_dim:
        # only the strict upper triangle competes; argmax ties go to the lowest (i, j)
        masked = np.where(np.triu(np.ones(C.shape, dtype=bool), k=1), C, -np.inf)
        i, j = divmod(int(np.argmax(masked)), C.shape[0])
        groups[i] = groups[i] + groups[j]
        del groups[j]
        current[:, i] = X[:, groups[i]].mean(axis=1)
        current = np.delete(current, j, axis=1)
        C = np.delete(np.delete(C, j, axis=0), j, axis=1)
        zi = _standardize(current[:, [i]])[:, 0]
        row = np.abs(_standardize(current).T @ zi)
        C[i, :] = row
        C[:, i] = row
    meta = [tuple(m for g in grp for m in E.column_meta[g]) for grp in groups]
    return EncodedTable(current, list(E.row_ids), meta)


def _sse(X: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    return float(np.sum((X - centroids[labels]) ** 2))


def kmeans(X, k: int, seed: int, max_iter: int = 300) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations from a seeded k-means++ start; no cluster is left empty."""
    X = as_matrix(getattr(X, "matrix", X), name="X")
    n = X.shape[0]
    if not 1 <= k <= n:
        raise InvalidArgument(f"k={k} must lie in [1, {n}]")
    gen = np.random.default_rng(seed)
    chosen = [int(gen.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    while len(chosen) < k:
        total = d2.sum()
        if total > 0:
            nxt = int(gen.choice(n, p=d2 / total))
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(gen.choice(free))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
    centroids = X[chosen].copy()

    labels = np.full(n, -1)
    for _ in range(max_iter):
        dist = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(dist, axis=1)
        counts = np.bincount(new, minlength=k)
        for c in np.flatnonzero(counts == 0):
            # reseed an empty cluster with the farthest point of a cluster that can spare one
            own = dist[np.arange(n), new]
            spare = counts[new] > 1
            cand = np.flatnonzero(spare)
            p = int(cand[np.argmax(own[cand])])
            counts[new[p]] -= 1
            new[p] = c
            counts[c] = 1
            centroids[c] = X[p]
        if np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            centroids[c] = X[labels == c].mean(axis=0)
    return labels, centroids


def within_cluster_ss(X, k_max: int, seed: int) -> list[float]:
    X = as_matrix(getattr(X, "matrix", X), name="X")
    out = []
    for k in range(1, k_max + 1):
        labels, cents = kmeans(X, k, derive_seed(seed, f"kmeans/{k}"))
        out.append(_sse(X, labels, cents))
    return out


def choose_k_elbow(X, k_max: int, seed: int) -> int:
    """k in 2..k_max-1 maximizing W(k-1) - 2 W(k) + W(k+1); 1 if W(1) is ~0."""
    X = as_matrix(getattr(X, "matrix", X), name="X")
    if k_max < 2:
        raise InvalidArgument("k_max must be >= 2")
    if X.shape[0] < k_max:
        raise InvalidArgument(f"need at least k_max={k_max} rows, got {X.shape[0]}")
    W = within_cluster_ss(X, k_max, seed)
    if W[0] <= 1e-9:
        return 1
    if k_max == 2:
        return 2
    second = [W[k - 2] - 2 * W[k - 1] + W[k] for k in range(2, k_max)]
    return 2 + int(np.argmax(second))


def frequent_directions(A, ell: int) -> np.ndarray:
    """Frequent-directions sketch ``B`` (``ell`` rows) with ``B^T B ~ A^T A``.

    Uses a ``2 ell`` row buffer; each time it fills, the squared singular
    values are reduced by the ``ell``-th one so at least ``ell + 1`` rows
    free up.  Rows come out ordered by decreasing norm.  The error obeys ``||A^T A - B^T B||_2 <= 2 ||A||_F^2 / ell``.
    """
    A = as_matrix(A, name="A")
    if ell < 2:
        raise InvalidArgument("ell must be >= 2")
    n, m = A.shape
    buf = np.zeros((2 * ell, m))
    filled = 0

    def shrink(buffer: np.ndarray, index: int) -> tuple[np.ndarray, int]:
        r = svd(buffer)
        s = r.singular_values
        delta = s[index - 1] ** 2 if s.size >= index else 0.0
        s2 = np.sqrt(np.clip(s ** 2 - delta, 0.0, None))
        out = np.zeros_like(buffer)
        out[:s.size] = s2[:, None] * r.V.T
        return out, int(np.count_nonzero(s2 > 0))

    i = 0
    while i < n:
        take = min(2 * ell - filled, n - i)
        buf[filled:filled + take] = A[i:i + take]
        filled += take
        i += take
        if filled == 2 * ell:
            buf, filled = shrink(buf, ell)
    # a closing rotation puts the rows in the singular basis even when nothing
    # needs shrinking, so the sketch rows are always principal directions
    buf, filled = shrink(buf, ell + 1)
    return buf[:ell].copy()


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    j = int(np.argmax(np.abs(v)))
    return -v if v[j] < 0 else v


def sketch_directions(X: np.ndarray, ell: int) -> list[np.ndarray]:
    """Nonzero sketch rows with a fixed sign (largest-magnitude entry positive)."""
    B = frequent_directions(X, ell)
    norms = np.linalg.norm(B, axis=1)
    tol = 1e-10 * norms.max() if norms.size and norms.max() > 0 else 0.0
    return [_canonical_sign(B[j]) for j in range(B.shape[0]) if norms[j] > tol]


@dataclass
class Selection:
    selected: list = field(default_factory=list)
    rounds: dict = field(default_factory=dict)      # selected id -> round (1-based)
    covered_by: dict = field(default_factory=dict)  # removed id -> representative id
    dropped: list = field(default_factory=list)     # all-zero rows that cannot be ranked


def select_representatives(Ai, row_ids: Sequence | None = None,
                           config: SketchConfig = SketchConfig()) -> Selection:
    Ai = as_matrix(Ai, name="Ai")
    n = Ai.shape[0]
    if n == 0:
        raise InvalidArgument("cluster is empty")
    ids = list(range(n)) if row_ids is None else list(row_ids)
    out = Selection()
    zero = np.linalg.norm(Ai, axis=1) == 0
    if np.all(zero):
        rep = min(ids)
        out.selected.append(rep)
        out.rounds[rep] = 1
        out.covered_by.update({i: rep for i in ids if i != rep})
        return out
    out.dropped = [ids[i] for i in np.flatnonzero(zero)]
    remaining = [i for i in range(n) if not zero[i]]
    rnd = 0
    while remaining:
        rnd += 1
        directions = sketch_directions(Ai[remaining], config.sketch_rows)
        if not directions:
            # a flat spectrum shrinks the whole sketch to zero; fall back to the
            # leading principal direction so every round still makes progress
            directions = [_canonical_sign(svd(Ai[remaining]).V[:, 0])]
        for v in directions:
            if not remaining:
                break
            cos_v = cosine_matrix(Ai[remaining], v[None, :])[:, 0]
            best = cos_v.max()
            pick = min((ids[remaining[t]], remaining[t]) for t in np.flatnonzero(cos_v == best))[1]
            rep = ids[pick]
            out.selected.append(rep)
            out.rounds[rep] = rnd
            cos_a = cosine_matrix(Ai[remaining], Ai[[pick]])[:, 0]
            keep = []
            for t, r in enumerate(remaining):
                if r == pick:
                    continue
                if cos_a[t] >= config.theta:
                    out.covered_by[ids[r]] = rep
                else:
                    keep.append(r)
            remaining = keep
    return out


@dataclass
class SampleResult:
    row_ids: list
    clusters: np.ndarray
    selected: list
    rounds: dict
    coords: np.ndarray
    k: int
    covered_by: dict = field(default_factory=dict)

    def samples_frame(self) -> pd.DataFrame:
        cluster = dict(zip(self.row_ids, self.clusters))
        return pd.DataFrame({
            "person_id": self.selected,
            "cluster": [int(cluster[i]) for i in self.selected],
            "selection_round": [self.rounds[i] for i in self.selected],
        })

    def projection_frame(self) -> pd.DataFrame:
        chosen = set(self.selected)
        return pd.DataFrame({
            "person_id": self.row_ids,
            "x": self.coords[:, 0],
            "y": self.coords[:, 1],
            "selected_flag": [int(i in chosen) for i in self.row_ids],
        })


def projection_2d(X: np.ndarray) -> np.ndarray:
    """Coordinates on the top two principal directions (zero-padded when rank < 2)."""
    Xc = X - X.mean(axis=0)
    coords = np.zeros((X.shape[0], 2))
    if X.shape[1] == 0 or X.shape[0] < 2:
        return coords
    r = svd(Xc)
    for j in range(min(2, r.singular_values.size)):
        v = _canonical_sign(r.V[:, j])
        coords[:, j] = Xc @ v
    return coords


def representative_sample(table: pd.DataFrame, config: SketchConfig = SketchConfig(),
                          text_columns: Sequence[str] = ()) -> SampleResult:
    encoded = scale_and_encode(table, text_columns)
    reduced = agglomerate_features(encoded, config.target_dim)
    X = reduced.matrix
    n = X.shape[0]
    k_max = min(config.k_max, n)
    k = 1 if k_max < 2 else choose_k_elbow(X, k_max, derive_seed(config.seed, "elbow"))
    labels, _ = kmeans(X, k, derive_seed(config.seed, "kmeans")) if n else (np.zeros(0, int), None)
    selected: list = []
    rounds: dict = {}
    covered: dict = {}
    for c in range(k):
        members = np.flatnonzero(labels == c)
        sel = select_representatives(X[members], [reduced.row_ids[i] for i in members], config)
        selected.extend(sel.selected)
        rounds.update(sel.rounds)
        covered.update(sel.covered_by)
    coords = projection_2d(encoded.matrix)
    return SampleResult(list(reduced.row_ids), labels, selected, rounds, coords, k, covered)


def write_sample_outputs(result: SampleResult, samples_path, projection_path) -> None:
    result.samples_frame().to_csv(samples_path, index=False, lineterminator="\n")
    result.projection_frame().to_csv(projection_path, index=False, lineterminator="\n",
                                      float_format="%.10g")
