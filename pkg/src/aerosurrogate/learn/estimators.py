"""The eight regression families on features (alpha, Mach).

Every fitted model is an immutable state object with ``predict`` and a JSON
round trip. Distance-based families (svr, knn) standardize features; tree
families consume raw features.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .trees import Tree, TreeStack, boost_trees, grow_bootstrap, grow_tree

FAMILIES = ("constant", "linear", "polynomial", "svr", "knn", "tree", "forest", "gbt")

DEFAULT_GRIDS: dict[str, tuple[dict, ...]] = {
    "constant": ({},),
    "linear": ({},),
    "polynomial": tuple({"degree": d} for d in (2, 3, 4, 5)),
    "svr": tuple({"kernel": k} for k in ("linear", "polynomial", "gaussian", "sigmoid")),
    "knn": tuple({"n_neighbors": k, "weights": w} for k in range(1, 702, 20) for w in ("uniform", "distance")),
    "tree": tuple({"max_depth": d} for d in range(1, 11)),
    "forest": tuple({"max_depth": d, "n_trees": t} for d in range(1, 7) for t in range(100, 701, 100)),
    "gbt": tuple({"max_depth": d} for d in range(1, 7)),
}

SVR_C = 1.0
SVR_EPSILON = 0.01
GBT_LEARNING_RATE = 0.1
GBT_PATIENCE = 50
GBT_MAX_ROUNDS = 5000


class RankError(ValueError):
    """Design matrix is rank deficient (e.g. all-identical features)."""


def check_family(family: str) -> str:
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")
    return family


def _as_features(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != 2:
        raise ValueError(f"expected features of shape (n, 2), got {X.shape}")
    return X


@dataclass(frozen=True)
class EstimatorSpec:
    family: str
    params: Mapping[str, Any] = field(default_factory=dict)
    grid: tuple[dict, ...] = ()

    def __post_init__(self):
        check_family(self.family)
        object.__setattr__(self, "params", dict(self.params))
        if not self.grid:
            object.__setattr__(self, "grid", DEFAULT_GRIDS[self.family])

    def with_params(self, params: Mapping[str, Any]) -> "EstimatorSpec":
        return EstimatorSpec(self.family, params, self.grid)


# --- fitted states -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConstantState:
    value: float

    def predict(self, X):
        return np.full(_as_features(X).shape[0], self.value)

    def to_dict(self):
        return {"value": self.value}


@dataclass(frozen=True, eq=False)
class LinearState:
    coef: np.ndarray  # on (alpha, mach, 1)

    def predict(self, X):
        X = _as_features(X)
        return X @ self.coef[:2] + self.coef[2]

    def to_dict(self):
        return {"coef": self.coef.tolist()}


def _monomials(degree: int) -> np.ndarray:
    return np.array([(i, t - i) for t in range(degree + 1) for i in range(t, -1, -1)], dtype=int)


@dataclass(frozen=True, eq=False)
class PolynomialState:
    degree: int
    center: np.ndarray
    scale: np.ndarray
    coef: np.ndarray

    def design(self, X):
        Z = (_as_features(X) - self.center) / self.scale
        e = _monomials(self.degree)
        return Z[:, :1] ** e[:, 0] * Z[:, 1:] ** e[:, 1]

    def predict(self, X):
        return self.design(X) @ self.coef

    def to_dict(self):
        return {"degree": self.degree, "center": self.center.tolist(), "scale": self.scale.tolist(),
                "coef": self.coef.tolist()}


_SVR_KERNELS = {"linear": "linear", "polynomial": "poly", "gaussian": "rbf", "sigmoid": "sigmoid"}


@dataclass(frozen=True, eq=False)
class SvrState:
    kernel: str
    gamma: float
    coef0: float
    degree: int
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    support: np.ndarray
    dual: np.ndarray
    intercept: float

    def kernel_matrix(self, Z):
        G = Z @ self.support.T
        if self.kernel == "linear":
            return G
        if self.kernel == "polynomial":
            return (self.gamma * G + self.coef0) ** self.degree
        if self.kernel == "sigmoid":
            return np.tanh(self.gamma * G + self.coef0)
        sq = (Z * Z).sum(1)[:, None] + (self.support * self.support).sum(1)[None, :] - 2.0 * G
        return np.exp(-self.gamma * np.maximum(sq, 0.0))

    def predict(self, X):
        Z = (_as_features(X) - self.x_mean) / self.x_std
        return self.y_mean + self.y_std * (self.kernel_matrix(Z) @ self.dual + self.intercept)

    def to_dict(self):
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in vars(self).items()}


def _standardize(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


def knn_neighbors(Zq, Zref, k: int):
    """Indices and distances of the k nearest references, ordered by (distance, index)."""
    idx = np.empty((Zq.shape[0], k), dtype=np.int64)
    dist = np.empty((Zq.shape[0], k))
    chunk = max(1, 2_000_000 // max(Zref.shape[0], 1))
    for s in range(0, Zq.shape[0], chunk):
        q = Zq[s:s + chunk]
        # explicit differences keep coincident points at distance exactly zero
        d2 = ((q[:, None, :] - Zref[None, :, :]) ** 2).sum(-1)
        o = np.argsort(d2, axis=1, kind="stable")[:, :k]
        idx[s:s + chunk] = o
        dist[s:s + chunk] = np.sqrt(np.take_along_axis(d2, o, axis=1))
    return idx, dist


def knn_average(y_nb, dist, weights: str) -> np.ndarray:
    """Cumulative neighbor averages: column j is the prediction with j+1 neighbors."""
    count = np.arange(1, y_nb.shape[1] + 1)
    if weights == "uniform":
        return np.cumsum(y_nb, axis=1) / count
    exact = dist == 0.0
    n_exact = np.cumsum(exact, axis=1)
    # 0/0 columns only occur where an exact match takes over below
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(exact, 0.0, 1.0 / dist)
        inv = np.cumsum(w * y_nb, axis=1) / np.cumsum(w, axis=1)
    at_exact = np.cumsum(np.where(exact, y_nb, 0.0), axis=1) / np.maximum(n_exact, 1)
    return np.where(n_exact > 0, at_exact, inv)


@dataclass(frozen=True, eq=False)
class KnnState:
    n_neighbors: int
    weights: str
    x_mean: np.ndarray
    x_std: np.ndarray
    Z: np.ndarray
    y: np.ndarray

    def predict(self, X):
        Zq = (_as_features(X) - self.x_mean) / self.x_std
        idx, dist = knn_neighbors(Zq, self.Z, self.n_neighbors)
        return knn_average(self.y[idx], dist, self.weights)[:, -1]

    def to_dict(self):
        return {"n_neighbors": self.n_neighbors, "weights": self.weights, "x_mean": self.x_mean.tolist(),
                "x_std": self.x_std.tolist(), "Z": self.Z.tolist(), "y": self.y.tolist()}


@dataclass(frozen=True, eq=False)
class TreeState:
    tree: Tree

    def predict(self, X):
        return self.tree.predict(_as_features(X))

    def to_dict(self):
        return {"tree": self.tree.to_dict()}


@dataclass(frozen=True, eq=False)
class ForestState:
    trees: tuple[Tree, ...]

    def predict(self, X):
        X = _as_features(X)
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def to_dict(self):
        return {"trees": [t.to_dict() for t in self.trees]}


@dataclass(frozen=True, eq=False)
class GbtState:
    init: float
    learning_rate: float
    trees: tuple[Tree, ...]

    def predict(self, X):
        X = _as_features(X)
        out = np.full(X.shape[0], self.init)
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
        return out

    def to_dict(self):
        return {"init": self.init, "learning_rate": self.learning_rate, "trees": [t.to_dict() for t in self.trees]}


def _arr(d, *keys):
    return {k: np.asarray(d[k], float) for k in keys}


_STATE_LOADERS = {
    "constant": lambda d: ConstantState(float(d["value"])),
    "linear": lambda d: LinearState(np.asarray(d["coef"], float)),
    "polynomial": lambda d: PolynomialState(int(d["degree"]), **_arr(d, "center", "scale", "coef")),
    "svr": lambda d: SvrState(d["kernel"], float(d["gamma"]), float(d["coef0"]), int(d["degree"]),
                              y_mean=float(d["y_mean"]), y_std=float(d["y_std"]), intercept=float(d["intercept"]),
                              **_arr(d, "x_mean", "x_std", "support", "dual")),
    "knn": lambda d: KnnState(int(d["n_neighbors"]), d["weights"], **_arr(d, "x_mean", "x_std", "Z", "y")),
    "tree": lambda d: TreeState(Tree.from_dict(d["tree"])),
    "forest": lambda d: ForestState(tuple(Tree.from_dict(t) for t in d["trees"])),
    "gbt": lambda d: GbtState(float(d["init"]), float(d["learning_rate"]),
                              tuple(Tree.from_dict(t) for t in d["trees"])),
}


# --- fitting -------------------------------------------------------------------------

def fit_polynomial(X, y, degree: int) -> PolynomialState:
    lo, hi = X.min(axis=0), X.max(axis=0)
    center = 0.5 * (lo + hi)
    scale = np.where(hi > lo, 0.5 * (hi - lo), 1.0)
    state = PolynomialState(degree, center, scale, np.zeros(len(_monomials(degree))))
    A = state.design(X)
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < A.shape[1]:
        raise RankError(f"degree-{degree} design has rank {rank} < {A.shape[1]} terms")
    return PolynomialState(degree, center, scale, coef)


def fit_svr(X, y, kernel: str) -> SvrState:
    from sklearn.svm import SVR

    if kernel not in _SVR_KERNELS:
        raise ValueError(f"unknown svr kernel {kernel!r}")
    x_mean, x_std = _standardize(X)
    Z = (X - x_mean) / x_std
    y_mean = float(y.mean())
    y_std = float(y.std()) or 1.0
    gamma = 1.0 / (Z.shape[1] * Z.var()) if Z.var() > 0 else 1.0
    model = SVR(kernel=_SVR_KERNELS[kernel], C=SVR_C, epsilon=SVR_EPSILON, gamma=gamma, degree=3, coef0=0.0)
    model.fit(Z, (y - y_mean) / y_std)
    return SvrState(kernel, float(gamma), 0.0, 3, x_mean, x_std, y_mean, y_std,
                    np.asarray(model.support_vectors_, float).copy(), model.dual_coef_.ravel().copy(),
                    float(model.intercept_[0]))


def fit_knn(X, y, n_neighbors: int, weights: str) -> KnnState:
    if weights not in ("uniform", "distance"):
        raise ValueError(f"unknown knn weights {weights!r}")
    if not 1 <= n_neighbors <= y.size:
        raise ValueError(f"n_neighbors={n_neighbors} needs 1 <= k <= {y.size} training rows")
    x_mean, x_std = _standardize(X)
    return KnnState(int(n_neighbors), weights, x_mean, x_std, (X - x_mean) / x_std, y.copy())


def bootstrap_indices(n: int, n_trees: int, rng: np.random.Generator) -> np.ndarray:
    """Row t holds the draw for tree t; drawing row by row keeps prefixes stable."""
    return np.stack([rng.integers(0, n, n) for _ in range(n_trees)])


def bootstrap_trees(X, y, max_depth: int, n_trees: int, rng: np.random.Generator) -> TreeStack:
    """Trees on successive bootstrap draws; a prefix of the stack is a smaller forest."""
    return grow_bootstrap(X, y, bootstrap_indices(y.size, n_trees, rng), max_depth)


@dataclass(frozen=True)
class BoostTrace:
    n_iter: int
    stop_reason: str
    val_mse: np.ndarray  # after each round, rounds beyond n_iter included


def boost(X, y, X_val, y_val, max_depth: int, learning_rate=GBT_LEARNING_RATE,
          patience=GBT_PATIENCE, max_rounds=GBT_MAX_ROUNDS) -> tuple[GbtState, BoostTrace]:
    """Least-squares boosting truncated at the round with minimal validation MSE."""
    y_val = np.asarray(y_val, float)
    if y_val.size == 0:
        raise ValueError("gbt needs a nonempty validation set")
    init, stack, early, hist = boost_trees(X, y, X_val, y_val, max_depth, learning_rate, patience, max_rounds)
    state = GbtState(init, learning_rate, tuple(stack.trees()))
    return state, BoostTrace(len(stack), "early_stopping" if early else "max_rounds", hist)


@dataclass(frozen=True, eq=False)
class TrainedEstimator:
    family: str
    params: dict
    state: Any
    cv_scores: tuple = ()          # ((params, mean MSE or None if skipped), ...)
    n_iter: int | None = None      # gbt only
    stop_reason: str | None = None
    support: tuple | None = None   # ((alpha_min, mach_min), (alpha_max, mach_max)) of the training rows

    def predict(self, X) -> np.ndarray:
        return self.state.predict(X)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": self.params, "n_iter": self.n_iter,
                "stop_reason": self.stop_reason,
                "cv_scores": [{"params": p, "mse": s} for p, s in self.cv_scores],
                "support": None if self.support is None else [list(r) for r in self.support],
                "state": self.state.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedEstimator":
        fam = check_family(d["family"])
        cv = tuple((c["params"], c["mse"]) for c in d.get("cv_scores", ()))
        sup = d.get("support")
        sup = None if sup is None else tuple(tuple(float(v) for v in r) for r in sup)
        return cls(fam, dict(d["params"]), _STATE_LOADERS[fam](d["state"]), cv,
                   d.get("n_iter"), d.get("stop_reason"), sup)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "TrainedEstimator":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit(spec: EstimatorSpec, X, y, X_val=None, y_val=None,
        rng: np.random.Generator | None = None) -> TrainedEstimator:
    """Fit one family at ``spec.params``. gbt needs a validation set for stopping."""
    X = _as_features(X)
    y = np.asarray(y, dtype=float)
    if y.size == 0 or y.shape != (X.shape[0],):
        raise ValueError("need a nonempty training set with one target per row")
    fam, p = spec.family, spec.params
    n_iter = reason = None
    if fam == "constant":
        state = ConstantState(float(y.mean()))
    elif fam == "linear":
        A = np.column_stack([X, np.ones(y.size)])
        coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
        if rank < 3:
            raise RankError(f"linear design has rank {rank} < 3")
        state = LinearState(coef)
    elif fam == "polynomial":
        state = fit_polynomial(X, y, int(p["degree"]))
    elif fam == "svr":
        state = fit_svr(X, y, p["kernel"])
    elif fam == "knn":
        state = fit_knn(X, y, int(p["n_neighbors"]), p["weights"])
    elif fam == "tree":
        state = TreeState(grow_tree(X, y, int(p["max_depth"])))
    elif fam == "forest":
        rng = np.random.default_rng(0) if rng is None else rng
        state = ForestState(tuple(bootstrap_trees(X, y, int(p["max_depth"]), int(p["n_trees"]), rng).trees()))
    else:
        if X_val is None or y_val is None:
            raise ValueError("gbt needs a validation set for early stopping")
        state, tr = boost(X, y, _as_features(X_val), np.asarray(y_val, float), int(p["max_depth"]))
        n_iter, reason = tr.n_iter, tr.stop_reason
    support = (tuple(X.min(axis=0).tolist()), tuple(X.max(axis=0).tolist()))
    return TrainedEstimator(fam, dict(p), state, (), n_iter, reason, support)


def grid_product(**axes) -> tuple[dict, ...]:
    """Cartesian grid in the order the axes are given (first axis varies slowest)."""
    keys = list(axes)
    return tuple(dict(zip(keys, vals)) for vals in product(*axes.values()))
