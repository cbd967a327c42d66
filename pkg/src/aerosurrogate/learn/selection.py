"""k-fold cross-validated grid search.

Folds come from the training rows only. Tree, forest and knn grids are scored
from a single fit per fold (depth truncation, tree prefixes and cumulative
neighbor sums), which gives the same candidate models as fitting each grid
point separately.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .estimators import (
    EstimatorSpec, RankError, TrainedEstimator, _as_features, _standardize, bootstrap_trees, boost, fit,
    knn_average, knn_neighbors,
)
from .trees import grow_tree

TIE_RTOL = 1e-12


@dataclass(frozen=True)
class CvResult:
    spec: EstimatorSpec
    scores: tuple  # ((params, mean MSE or None), ...) in grid order


def kfold(n: int, k: int, seed: int) -> list[np.ndarray]:
    if n < k:
        raise ValueError(f"{k}-fold CV needs at least {k} rows, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, k)


def _mse(y, pred):
    return float(np.mean((y - pred) ** 2))


def _scores_tree(grid, Xtr, ytr, Xte, yte, **_):
    depths = [int(g["max_depth"]) for g in grid]
    preds = grow_tree(Xtr, ytr, max(depths)).predict_depths(Xte)
    return [_mse(yte, preds[d - 1]) for d in depths]


def _scores_forest(grid, Xtr, ytr, Xte, yte, rng, **_):
    depths = [int(g["max_depth"]) for g in grid]
    counts = [int(g["n_trees"]) for g in grid]
    trees = bootstrap_trees(Xtr, ytr, max(depths), max(counts), rng)
    cum = np.cumsum(trees.predict_depths(Xte), axis=0)  # (trees, depth, rows)
    return [_mse(yte, cum[t - 1, d - 1] / t) for d, t in zip(depths, counts)]


def _scores_knn(grid, Xtr, ytr, Xte, yte, **_):
    x_mean, x_std = _standardize(Xtr)
    ks = [int(g["n_neighbors"]) for g in grid]
    kmax = min(max(ks), ytr.size)
    idx, dist = knn_neighbors((Xte - x_mean) / x_std, (Xtr - x_mean) / x_std, kmax)
    avg = {w: knn_average(ytr[idx], dist, w) for w in {g["weights"] for g in grid}}
    out = []
    for g, k in zip(grid, ks):
        if k > ytr.size:
            warnings.warn(f"knn candidate n_neighbors={k} skipped: fold has {ytr.size} training rows",
                          stacklevel=3)
            out.append(None)
        else:
            out.append(_mse(yte, avg[g["weights"]][:, k - 1]))
    return out


def _scores_gbt(grid, Xtr, ytr, Xte, yte, X_val, y_val, **_):
    if X_val is None:
        raise ValueError("gbt needs a validation set for early stopping")
    return [_mse(yte, boost(Xtr, ytr, X_val, y_val, int(g["max_depth"]))[0].predict(Xte)) for g in grid]


def _scores_generic(grid, Xtr, ytr, Xte, yte, family, **_):
    out = []
    for g in grid:
        try:
            est = fit(EstimatorSpec(family, g), Xtr, ytr)
        except RankError as exc:
            warnings.warn(f"{family} candidate {g} skipped: {exc}", stacklevel=3)
            out.append(None)
            continue
        out.append(_mse(yte, est.predict(Xte)))
    return out


_FAST = {"tree": _scores_tree, "forest": _scores_forest, "knn": _scores_knn, "gbt": _scores_gbt}


def pick(scores: Sequence[float | None]) -> int:
    """Index of the minimal score; near-ties go to the earliest grid entry."""
    valid = [s for s in scores if s is not None]
    if not valid:
        raise ValueError("no feasible candidate in the grid")
    best = min(valid)
    return next(i for i, s in enumerate(scores) if s is not None and s <= best + TIE_RTOL * abs(best))


def cv_scores(family: str, grid, X, y, k: int = 3, seed: int = 0, X_val=None, y_val=None) -> list[float | None]:
    X = _as_features(X)
    y = np.asarray(y, float)
    grid = tuple(grid)
    if not grid:
        raise ValueError("empty hyper-parameter grid")
    folds = kfold(y.size, k, seed)
    per_fold = []
    scorer = _FAST.get(family, _scores_generic)
    for i, te in enumerate(folds):
        tr = np.concatenate([f for j, f in enumerate(folds) if j != i])
        per_fold.append(scorer(grid, X[tr], y[tr], X[te], y[te], family=family,
                               rng=np.random.default_rng([seed, i]), X_val=X_val, y_val=y_val))
    out = []
    for c in range(len(grid)):
        vals = [f[c] for f in per_fold]
        out.append(None if any(v is None for v in vals) else float(np.mean(vals)))
    return out


def cv_select(family: str, grid, X, y, k: int = 3, seed: int = 0, X_val=None, y_val=None) -> CvResult:
    grid = tuple(grid)
    if len(grid) == 1:
        return CvResult(EstimatorSpec(family, grid[0], grid), ((grid[0], None),))
    scores = cv_scores(family, grid, X, y, k, seed, X_val, y_val)
    best = pick(scores)
    return CvResult(EstimatorSpec(family, grid[best], grid), tuple(zip(grid, scores)))


def select_and_fit(spec: EstimatorSpec, X, y, X_val=None, y_val=None, k: int = 3, seed: int = 0) -> TrainedEstimator:
    """Cross-validate over ``spec.grid`` then refit the winner on all of ``X``."""
    res = cv_select(spec.family, spec.grid, X, y, k, seed, X_val, y_val)
    est = fit(res.spec, X, y, X_val, y_val, rng=np.random.default_rng([seed, k]))
    return TrainedEstimator(est.family, est.params, est.state, res.scores, est.n_iter, est.stop_reason,
                            est.support)
