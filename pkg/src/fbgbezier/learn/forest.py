"""Random-forest regression grown from scratch, one forest per output column.

Trees are CART regressors on bootstrap resamples: variance-reduction splits,
thresholds at midpoints between consecutive distinct feature values, and
both children holding at least ``min_leaf`` rows.  A node becomes a leaf
when it has fewer than ``2 * min_leaf`` rows, zero target variance, or no
split with positive gain.

Randomness per tree comes from ``SeedSequence([seed, output, tree])``: the
first draw is the bootstrap sample, the second a ``(max_nodes, n_features)``
block of uniform keys.  The node with pre-order id ``k`` examines the
``mtry`` features with the smallest keys in row ``k``, in ascending feature
order.  Split ties go to the lowest feature index, then the smallest
threshold.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from ..errors import DataError, DimensionError

TIE_RTOL = 1e-12


def tree_rng(seed: int, output: int, tree: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(output), int(tree)]))


def max_nodes_for(n_rows: int, min_leaf: int) -> int:
    return 2 * max(n_rows // min_leaf, 1) + 1


def tree_draws(seed, output, tree, n_rows, n_features, min_leaf, bootstrap=True):
    """Bootstrap indices and per-node feature keys for one tree."""
    rng = tree_rng(seed, output, tree)
    if bootstrap:
        sample = rng.integers(0, n_rows, size=n_rows)
    else:
        sample = np.arange(n_rows)
    keys = rng.random((max_nodes_for(n_rows, min_leaf), n_features))
    return sample.astype(np.int64), keys


@numba.njit(cache=True, nogil=True)
def _build_tree(X, y, sample, keys, min_leaf, mtry):
    n_features = X.shape[1]
    max_nodes = keys.shape[0]
    feature = np.full(max_nodes, -1, np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    value = np.zeros(max_nodes)
    count = np.zeros(max_nodes, np.int64)
    gain_out = np.zeros(max_nodes)

    idx = sample.copy()
    m = idx.shape[0]
    buf = np.empty(m, np.int64)
    # stack entries: start, end, parent, is_right
    st_start = np.empty(max_nodes, np.int64)
    st_end = np.empty(max_nodes, np.int64)
    st_parent = np.empty(max_nodes, np.int64)
    st_right = np.empty(max_nodes, np.int64)
    top = 0
    st_start[0] = 0
    st_end[0] = m
    st_parent[0] = -1
    st_right[0] = 0
    top = 1
    n_nodes = 0

    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        parent = st_parent[top]
        is_right = st_right[top]
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if is_right == 1:
                right[parent] = node
            else:
                left[parent] = node
        n = end - start
        count[node] = n

        total = 0.0
        ymin = np.inf
        ymax = -np.inf
        for j in range(start, end):
            v = y[idx[j]]
            total += v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        mean = total / n
        value[node] = mean
        if n < 2 * min_leaf or ymin == ymax:
            continue
        node_sse = 0.0
        for j in range(start, end):
            d = y[idx[j]] - mean
            node_sse += d * d
        tol = TIE_RTOL * node_sse

        order = np.argsort(keys[node])
        feats = np.sort(order[:mtry])
        best_gain = tol
        best_f = -1
        best_thr = 0.0
        xs = np.empty(n)
        ys = np.empty(n)
        for fi in range(feats.shape[0]):
            f = feats[fi]
            for j in range(n):
                xs[j] = X[idx[start + j], f]
            srt = np.argsort(xs, kind="mergesort")
            for j in range(n):
                ys[j] = y[idx[start + srt[j]]] - mean
            s_left = 0.0
            s_total = 0.0
            for j in range(n):
                s_total += ys[j]
            for i in range(1, n):
                s_left += ys[i - 1]
                if i < min_leaf or n - i < min_leaf:
                    continue
                xa = xs[srt[i - 1]]
                xb = xs[srt[i]]
                if not xa < xb:
                    continue
                s_right = s_total - s_left
                g = s_left * s_left / i + s_right * s_right / (n - i) - s_total * s_total / n
                if g > best_gain + tol:
                    best_gain = g
                    best_f = f
                    thr = 0.5 * (xa + xb)
                    if thr >= xb:
                        thr = xa
                    best_thr = thr
        if best_f < 0:
            continue
        feature[node] = best_f
        threshold[node] = best_thr
        gain_out[node] = best_gain
        # stable partition
        nl = 0
        for j in range(start, end):
            if X[idx[j], best_f] <= best_thr:
                buf[nl] = idx[j]
                nl += 1
        k = nl
        for j in range(start, end):
            if not X[idx[j], best_f] <= best_thr:
                buf[k] = idx[j]
                k += 1
        for j in range(n):
            idx[start + j] = buf[j]
        # right pushed first so the left subtree is numbered next
        st_start[top] = start + nl
        st_end[top] = end
        st_parent[top] = node
        st_right[top] = 1
        top += 1
        st_start[top] = start
        st_end[top] = start + nl
        st_parent[top] = node
        st_right[top] = 0
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), count[:n_nodes].copy(),
            gain_out[:n_nodes].copy())


@numba.njit(cache=True, nogil=True)
def _predict_trees(X, feature, threshold, left, right, value, offsets, out):
    """Per-tree predictions, ``out`` is ``(n_trees, n_rows)``."""
    n_trees = offsets.shape[0] - 1
    for t in range(n_trees):
        base = offsets[t]
        for r in range(X.shape[0]):
            node = base
            while feature[node] >= 0:
                if X[r, feature[node]] <= threshold[node]:
                    node = base + left[node]
                else:
                    node = base + right[node]
            out[t, r] = value[node]


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        out = np.empty((1, len(X)))
        _predict_trees(X, self.feature, self.threshold, self.left, self.right, self.value,
                       np.array([0, self.n_nodes]), out)
        return out[0]


@dataclass
class Forest:
    """All trees for one output, stored as concatenated node arrays."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    offsets: np.ndarray

    @property
    def n_trees(self) -> int:
        return len(self.offsets) - 1

    def tree(self, t: int) -> Tree:
        a, b = self.offsets[t], self.offsets[t + 1]
        return Tree(self.feature[a:b], self.threshold[a:b], self.left[a:b], self.right[a:b],
                    self.value[a:b], self.count[a:b])

    def predict_trees(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        out = np.empty((self.n_trees, len(X)))
        _predict_trees(X, self.feature, self.threshold, self.left, self.right, self.value,
                       self.offsets, out)
        return out

    def predict(self, X) -> np.ndarray:
        return self.predict_trees(X).mean(axis=0)

    @classmethod
    def from_trees(cls, trees) -> "Forest":
        sizes = [t.n_nodes for t in trees]
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        cat = lambda name, dt: np.concatenate([getattr(t, name) for t in trees]).astype(dt)
        return cls(cat("feature", np.int64), cat("threshold", float), cat("left", np.int64),
                   cat("right", np.int64), cat("value", float), cat("count", np.int64), offsets)


@dataclass
class ForestModel:
    forests: list
    n_features: int
    n_trees: int
    min_leaf: int
    mtry: int
    seed: int
    bootstrap: bool
    n_train: int
    impurity_importance: np.ndarray = None
    config: dict = field(default_factory=dict)
    last_predict_seconds_per_sample: float = None

    @property
    def n_outputs(self) -> int:
        return len(self.forests)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise DimensionError(f"expected {self.n_features} features, got {X.shape[1]}")
        t0 = time.perf_counter()
        out = np.column_stack([f.predict(X) for f in self.forests])
        if len(X):
            self.last_predict_seconds_per_sample = (time.perf_counter() - t0) / len(X)
        return out

    def bootstrap_sample(self, output: int, tree: int) -> np.ndarray:
        sample, _ = tree_draws(self.seed, output, tree, self.n_train, self.n_features,
                               self.min_leaf, self.bootstrap)
        return sample

    def oob_mask(self, output: int, tree: int) -> np.ndarray:
        if not self.bootstrap:
            raise DataError("forest was grown without bootstrap; no out-of-bag rows")
        mask = np.ones(self.n_train, dtype=bool)
        mask[self.bootstrap_sample(output, tree)] = False
        return mask


def build_tree(X, y, sample, keys, min_leaf: int, mtry: int):
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    feature, threshold, left, right, value, count, gain = _build_tree(
        X, y, np.ascontiguousarray(sample, dtype=np.int64), np.ascontiguousarray(keys),
        int(min_leaf), int(mtry))
    return Tree(feature, threshold, left, right, value, count), gain


def train_forest(X, Y, n_trees: int = 200, min_leaf: int = 5, mtry: int = 2, seed: int = 0,
                 bootstrap: bool = True, n_jobs: int = 1) -> ForestModel:
    """Grow ``n_trees`` trees for every column of ``Y``.

    Results are identical for any ``n_jobs`` because every tree draws from
    its own seeded stream.
    """
    X = np.ascontiguousarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, n_features = X.shape
    if len(Y) != n:
        raise DimensionError("feature and target row counts differ")
    if n < 2 * min_leaf:
        raise DataError(f"need at least {2 * min_leaf} training rows, got {n}")
    if not 1 <= mtry <= n_features:
        raise DataError(f"mtry must be in [1, {n_features}]")
    if n_trees < 1:
        raise DataError("need at least one tree")

    def grow(job):
        o, t = job
        sample, keys = tree_draws(seed, o, t, n, n_features, min_leaf, bootstrap)
        tree, gain = build_tree(X, np.ascontiguousarray(Y[:, o]), sample, keys, min_leaf, mtry)
        imp = np.bincount(tree.feature[tree.feature >= 0], weights=gain[tree.feature >= 0],
                          minlength=n_features)
        return tree, imp

    jobs = [(o, t) for o in range(Y.shape[1]) for t in range(n_trees)]
    if n_jobs == 1:
        results = [grow(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(grow, jobs))
    forests, impurity = [], np.zeros((Y.shape[1], n_features))
    for o in range(Y.shape[1]):
        chunk = results[o * n_trees:(o + 1) * n_trees]
        forests.append(Forest.from_trees([r[0] for r in chunk]))
        # fixed-order reduction over trees
        for _, imp in chunk:
            impurity[o] += imp
    sums = impurity.sum(axis=1, keepdims=True)
    impurity = np.divide(100.0 * impurity, sums, out=np.zeros_like(impurity), where=sums > 0)
    config = {"trees": n_trees, "min_leaf": min_leaf, "mtry": mtry, "seed": seed,
              "bootstrap": bootstrap}
    return ForestModel(forests, n_features, n_trees, min_leaf, mtry, seed, bootstrap, n,
                       impurity, config)


def predict_forest(model: ForestModel, X) -> np.ndarray:
    return model.predict(X)
