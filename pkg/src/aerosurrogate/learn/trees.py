"""Least-squares regression trees (CART) compiled with numba.

Trees are stored as flat node arrays. Every node keeps the mean target of its
samples, so a tree grown to depth D also answers for every depth d < D by
stopping traversal early; greedy growth makes that identical to a tree grown
with ``max_depth=d``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np


@nb.njit(cache=True)
def _grow(X, y, max_depth, feature, threshold, left, right, value, depth):
    n, p = X.shape
    # per-feature sample orders; each node owns the segment [lo, hi) of every row
    order = np.empty((p, n), np.int64)
    for f in range(p):
        order[f] = np.argsort(X[:, f], kind="mergesort")
    goes_left = np.zeros(n, np.bool_)
    buf = np.empty(n, np.int64)
    st_node = np.empty(feature.size, np.int64)
    st_lo = np.empty(feature.size, np.int64)
    st_hi = np.empty(feature.size, np.int64)
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    top = 1
    n_nodes = 1
    depth[0] = 0
    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        m = hi - lo
        tot = 0.0
        for i in range(lo, hi):
            tot += y[order[0, i]]
        value[node] = tot / m
        feature[node] = -1
        if depth[node] >= max_depth or m < 2:
            continue
        base = tot * tot / m
        best_gain = 0.0
        best_f = -1
        best_pos = -1
        best_thr = 0.0
        for f in range(p):
            s = 0.0
            for k in range(lo, hi - 1):
                s += y[order[f, k]]
                a = X[order[f, k], f]
                b = X[order[f, k + 1], f]
                if a == b:
                    continue
                nl = k - lo + 1
                gain = s * s / nl + (tot - s) * (tot - s) / (m - nl) - base
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_pos = nl
                    thr = 0.5 * (a + b)
                    best_thr = thr if thr < b else a
        if best_f < 0:
            continue
        for i in range(lo, hi):
            j = order[best_f, i]
            goes_left[j] = X[j, best_f] <= best_thr
        for f in range(p):
            w = lo
            r = 0
            for i in range(lo, hi):
                j = order[f, i]
                if goes_left[j]:
                    order[f, w] = j
                    w += 1
                else:
                    buf[r] = j
                    r += 1
            for i in range(r):
                order[f, w + i] = buf[i]
        feature[node] = best_f
        threshold[node] = best_thr
        l_id = n_nodes
        r_id = n_nodes + 1
        n_nodes += 2
        left[node] = l_id
        right[node] = r_id
        depth[l_id] = depth[node] + 1
        depth[r_id] = depth[node] + 1
        mid = lo + best_pos
        st_node[top] = r_id
        st_lo[top] = mid
        st_hi[top] = hi
        top += 1
        st_node[top] = l_id
        st_lo[top] = lo
        st_hi[top] = mid
        top += 1
    return n_nodes


@nb.njit(cache=True)
def _predict(X, feature, threshold, left, right, value, depth, max_depth, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0 and depth[node] < max_depth:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]


@nb.njit(cache=True)
def _predict_all_depths(X, feature, threshold, left, right, value, depth, max_depth, out):
    """out[d-1, i] = prediction truncated at depth d, for d = 1..max_depth."""
    for i in range(X.shape[0]):
        node = 0
        for d in range(1, max_depth + 1):
            if feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[d - 1, i] = value[node]


def node_capacity(max_depth: int, n: int) -> int:
    return min(2 ** (max_depth + 1) - 1, 2 * n - 1)


@nb.njit(cache=True)
def _grow_stack(X, y, boot, max_depth, feature, threshold, left, right, value, depth, n_nodes):
    for t in range(boot.shape[0]):
        b = boot[t]
        n_nodes[t] = _grow(X[b], y[b], max_depth, feature[t], threshold[t], left[t], right[t],
                           value[t], depth[t])


@nb.njit(cache=True)
def _stack_depths(X, feature, threshold, left, right, value, depth, max_depth, out):
    """out[t, d-1, i]: tree t truncated at depth d."""
    for t in range(feature.shape[0]):
        _predict_all_depths(X, feature[t], threshold[t], left[t], right[t], value[t], depth[t],
                            max_depth, out[t])


@nb.njit(cache=True)
def _boost(X, y, Xv, yv, max_depth, rate, patience, max_rounds, cap):
    n = y.size
    size = 64
    feature = np.full((size, cap), -1, np.int64)
    threshold = np.zeros((size, cap))
    left = np.full((size, cap), -1, np.int64)
    right = np.full((size, cap), -1, np.int64)
    value = np.zeros((size, cap))
    depth = np.zeros((size, cap), np.int64)
    n_nodes = np.zeros(size, np.int64)
    init = y.mean()
    f = np.full(n, init)
    fv = np.full(yv.size, init)
    r = np.empty(n)
    pt = np.empty(n)
    pv = np.empty(yv.size)
    hist = np.empty(max_rounds)
    best_mse = np.mean((yv - fv) ** 2)
    best = 0
    early = False
    m = 0
    while m < max_rounds:
        if m == size:
            size *= 2
            feature = _regrow_i(feature, size, -1)
            left = _regrow_i(left, size, -1)
            right = _regrow_i(right, size, -1)
            depth = _regrow_i(depth, size, 0)
            threshold = _regrow_f(threshold, size)
            value = _regrow_f(value, size)
            nn = np.zeros(size, np.int64)
            nn[:m] = n_nodes[:m]
            n_nodes = nn
        for i in range(n):
            r[i] = y[i] - f[i]
        n_nodes[m] = _grow(X, r, max_depth, feature[m], threshold[m], left[m], right[m], value[m], depth[m])
        _predict(X, feature[m], threshold[m], left[m], right[m], value[m], depth[m], max_depth, pt)
        _predict(Xv, feature[m], threshold[m], left[m], right[m], value[m], depth[m], max_depth, pv)
        f += rate * pt
        fv += rate * pv
        mse = np.mean((yv - fv) ** 2)
        hist[m] = mse
        m += 1
        if mse < best_mse:
            best_mse = mse
            best = m
        elif m - best >= patience:
            early = True
            break
    return (init, best, early, hist[:m], feature[:best], threshold[:best], left[:best], right[:best],
            value[:best], depth[:best], n_nodes[:best])


@nb.njit(cache=True)
def _regrow_i(a, size, fill):
    out = np.full((size, a.shape[1]), fill, np.int64)
    out[:a.shape[0]] = a
    return out


@nb.njit(cache=True)
def _regrow_f(a, size):
    out = np.zeros((size, a.shape[1]))
    out[:a.shape[0]] = a
    return out


@dataclass(frozen=True, eq=False)
class TreeStack:
    """Several trees of equal depth limit in padded (tree, node) arrays."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: np.ndarray
    n_nodes: np.ndarray
    max_depth: int

    def __len__(self) -> int:
        return self.feature.shape[0]

    def tree(self, t: int) -> "Tree":
        s = slice(0, int(self.n_nodes[t]))
        return Tree(self.feature[t, s], self.threshold[t, s], self.left[t, s], self.right[t, s],
                    self.value[t, s], self.depth[t, s], self.max_depth)

    def trees(self) -> list["Tree"]:
        return [self.tree(t) for t in range(len(self))]

    def predict_depths(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        out = np.empty((len(self), self.max_depth, X.shape[0]))
        _stack_depths(X, self.feature, self.threshold, self.left, self.right, self.value, self.depth,
                      self.max_depth, out)
        return out


def _empty_stack(n_trees, cap):
    return (np.full((n_trees, cap), -1, np.int64), np.zeros((n_trees, cap)), np.full((n_trees, cap), -1, np.int64),
            np.full((n_trees, cap), -1, np.int64), np.zeros((n_trees, cap)), np.zeros((n_trees, cap), np.int64),
            np.zeros(n_trees, np.int64))


def grow_bootstrap(X, y, boot, max_depth: int) -> TreeStack:
    """One tree per row of the bootstrap index matrix ``boot``."""
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    boot = np.ascontiguousarray(boot, dtype=np.int64)
    arrays = _empty_stack(boot.shape[0], node_capacity(max_depth, boot.shape[1]))
    _grow_stack(X, y, boot, max_depth, *arrays)
    return TreeStack(*arrays, max_depth)


def boost_trees(X, y, X_val, y_val, max_depth: int, rate: float, patience: int, max_rounds: int):
    """Least-squares boosting; returns (init, trees up to the best round, stopped early, val MSE history)."""
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    Xv = np.ascontiguousarray(X_val, dtype=float)
    yv = np.ascontiguousarray(y_val, dtype=float)
    cap = node_capacity(max_depth, y.size)
    init, best, early, hist, *arrays = _boost(X, y, Xv, yv, max_depth, rate, patience, max_rounds, cap)
    return float(init), TreeStack(*arrays, max_depth), bool(early), hist


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: np.ndarray
    max_depth: int

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def predict(self, X, max_depth: int | None = None) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        out = np.empty(X.shape[0])
        d = self.max_depth if max_depth is None else min(max_depth, self.max_depth)
        _predict(X, self.feature, self.threshold, self.left, self.right, self.value, self.depth, d, out)
        return out

    def predict_depths(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        out = np.empty((self.max_depth, X.shape[0]))
        _predict_all_depths(X, self.feature, self.threshold, self.left, self.right, self.value,
                            self.depth, self.max_depth, out)
        return out

    def to_dict(self) -> dict:
        return {"max_depth": self.max_depth,
                **{k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value", "depth")}}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        ints = {k: np.asarray(d[k], dtype=np.int64) for k in ("feature", "left", "right", "depth")}
        return cls(threshold=np.asarray(d["threshold"], float), value=np.asarray(d["value"], float),
                   max_depth=int(d["max_depth"]), **ints)


def grow_tree(X, y, max_depth: int) -> Tree:
    """Greedy least-squares tree; splits only on strict SSE improvement."""
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size or y.size == 0:
        raise ValueError("need nonempty X of shape (n, p) and y of length n")
    cap = node_capacity(max_depth, y.size)
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    depth = np.zeros(cap, np.int64)
    n_nodes = _grow(X, y, max_depth, feature, threshold, left, right, value, depth)
    s = slice(0, n_nodes)
    return Tree(feature[s].copy(), threshold[s].copy(), left[s].copy(), right[s].copy(),
                value[s].copy(), depth[s].copy(), max_depth)
