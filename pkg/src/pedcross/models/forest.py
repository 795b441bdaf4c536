"""CART trees and bootstrap-aggregated random forests.

Trees are stored as flat node arrays (``feature == -1`` marks a leaf).
Classification leaves hold ``[P(0), P(1)]``; regression leaves hold the mean
target. Split search evaluates every boundary between distinct sorted
values of a random feature subset; ties resolve to the lowest column index,
then the lowest threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class DecisionTree:
    feature: np.ndarray      # int, -1 for leaves
    threshold: np.ndarray
    left: np.ndarray         # int, -1 for leaves
    right: np.ndarray
    value: np.ndarray        # (n_nodes, k)
    impurity: np.ndarray
    n_samples: np.ndarray    # int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return node
            xv = X[rows, np.where(active, f, 0)]
            nxt = np.where(xv <= self.threshold[node], self.left[node], self.right[node])
            node = np.where(active, nxt, node)

    def predict_value(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "impurity": self.impurity.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "DecisionTree":
        return cls(
            feature=np.asarray(d["feature"], dtype=int),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=int),
            right=np.asarray(d["right"], dtype=int),
            value=np.asarray(d["value"], dtype=float).reshape(len(d["feature"]), -1),
            impurity=np.asarray(d["impurity"], dtype=float),
            n_samples=np.asarray(d["n_samples"], dtype=int),
        )


def _node_stats(y, classify):
    if classify:
        p = y.mean()
        return np.array([1.0 - p, p]), 2.0 * p * (1.0 - p)
    mu = y.mean()
    return np.array([mu]), float(np.mean((y - mu) ** 2))


def best_split(X, y, features, classify, min_samples_leaf=1):
    """Best (column, threshold, weighted child impurity) over ``features``.

    ``features`` must be sorted ascending. Returns None when no valid split
    exists.
    """
    m = X.shape[0]
    if m < 2 * min_samples_leaf:
        return None
    Xs = X[:, features]
    order = np.argsort(Xs, axis=0, kind="stable")
    xs = np.take_along_axis(Xs, order, axis=0)
    ys = y[order]
    nl = np.arange(1, m, dtype=float)[:, None]
    nr = m - nl
    if classify:
        c1 = np.cumsum(ys, axis=0)[:-1]
        tot = y.sum()
        pl = c1 / nl
        pr = (tot - c1) / nr
        weighted = (nl * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr)) / m
    else:
        s1 = np.cumsum(ys, axis=0)[:-1]
        s2 = np.cumsum(ys * ys, axis=0)[:-1]
        t1, t2 = y.sum(), (y * y).sum()
        sse_l = s2 - s1 * s1 / nl
        sse_r = (t2 - s2) - (t1 - s1) ** 2 / nr
        weighted = np.maximum(sse_l + sse_r, 0.0) / m
    valid = xs[:-1] < xs[1:]
    if min_samples_leaf > 1:
        valid &= (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
    if not valid.any():
        return None
    weighted = np.where(valid, weighted, np.inf)
    # column-major flattening: first minimum = lowest column, then lowest position
    flat = int(np.argmin(weighted.T))
    k, pos = divmod(flat, m - 1)
    thr = 0.5 * (xs[pos, k] + xs[pos + 1, k])
    if thr >= xs[pos + 1, k]:
        thr = xs[pos, k]
    return int(features[k]), float(thr), float(weighted[pos, k])


def build_tree(X, y, *, classify, max_depth, max_features, rng, min_samples_leaf=1) -> DecisionTree:
    n, d = X.shape
    feature, threshold, left, right, value, impurity, n_samples = [], [], [], [], [], [], []

    def new_node(idx):
        val, imp = _node_stats(y[idx], classify)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(val)
        impurity.append(imp)
        n_samples.append(len(idx))
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or impurity[node] <= 0.0:
            continue
        feats = np.sort(rng.choice(d, size=max_features, replace=False))
        split = best_split(X[idx], y[idx], feats, classify, min_samples_leaf)
        if split is None:
            continue
        col, thr, _ = split
        go_left = X[idx, col] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node] = col
        threshold[node] = thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return DecisionTree(
        feature=np.array(feature, dtype=int),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=int),
        right=np.array(right, dtype=int),
        value=np.vstack(value),
        impurity=np.array(impurity, dtype=float),
        n_samples=np.array(n_samples, dtype=int),
    )


def default_max_features(d: int, classify: bool) -> int:
    return max(1, math.ceil(math.sqrt(d)) if classify else math.ceil(d / 3))


def tree_rng(seed: int, index: int) -> np.random.Generator:
    """RNG for tree ``index``: seeded with ``seed + index`` (mod 2**64)."""
    return np.random.default_rng((seed + index) % 2**64)


def fit(X, y, *, classify, seed, n_estimators=100, max_depth=5, max_features=None,
        min_samples_leaf=1, bootstrap=True):
    """Fit a forest; returns ``(trees, info)`` where info carries the OOB score."""
    n, d = X.shape
    mf = max_features or default_max_features(d, classify)
    mf = min(mf, d)
    trees = []
    oob_sum = np.zeros(n)
    oob_cnt = np.zeros(n)
    for t in range(n_estimators):
        rng = tree_rng(seed, t)
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        tree = build_tree(X[idx], y[idx], classify=classify, max_depth=max_depth,
                          max_features=mf, rng=rng, min_samples_leaf=min_samples_leaf)
        trees.append(tree)
        if bootstrap:
            oob = np.ones(n, dtype=bool)
            oob[idx] = False
            if oob.any():
                v = tree.predict_value(X[oob])
                oob_sum[oob] += v[:, -1]
                oob_cnt[oob] += 1
    info = {"n_estimators": n_estimators, "max_features": mf}
    seen = oob_cnt > 0
    if seen.any():
        pred = oob_sum[seen] / oob_cnt[seen]
        if classify:
            info["oob_accuracy"] = float(np.mean((pred > 0.5) == (y[seen] > 0.5)))
        else:
            info["oob_mse"] = float(np.mean((pred - y[seen]) ** 2))
    return trees, info


def predict(trees, X) -> np.ndarray:
    """Mean over trees of the leaf class-1 probability (or leaf mean)."""
    acc = np.zeros(np.asarray(X).shape[0])
    for tree in trees:
        acc += tree.predict_value(X)[:, -1]
    return acc / len(trees)


def impurity_importance(trees, d: int) -> np.ndarray:
    """Mean decrease in impurity per column, each tree normalised to sum 1."""
    total = np.zeros(d)
    for tree in trees:
        imp = np.zeros(d)
        n_root = tree.n_samples[0]
        for i in np.flatnonzero(tree.feature >= 0):
            l, r = tree.left[i], tree.right[i]
            dec = (tree.n_samples[i] * tree.impurity[i]
                   - tree.n_samples[l] * tree.impurity[l]
                   - tree.n_samples[r] * tree.impurity[r]) / n_root
            imp[tree.feature[i]] += max(dec, 0.0)
        s = imp.sum()
        if s > 0:
            total += imp / s
    return total / len(trees)
