"""Repeated split / select / fit / score harness, bound tables and prediction curves."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .. import physics
from ..core import Dataset, write_rows
from ..preprocess import split
from ..smoothing import smooth
from .estimators import FAMILIES, DEFAULT_GRIDS, EstimatorSpec, TrainedEstimator, check_family
from .metrics import ErrorReport, metrics
from .selection import select_and_fit

TABLE_COLUMNS = ("family", "rmse_mean", "rmse_std", "mae_mean", "mae_std", "mape_mean", "mape_std",
                 "mape_excluded", "repetitions")
BOUND_COLUMNS = ("family", "mae_mean", "r", "total_abs", "total_rel_pct")
CURVE_COLUMNS = ("alpha_rad", "mach", "y_raw", "y_smooth")


def stream_seed(*key: int) -> int:
    """Independent 32-bit seed for a (seed, repetition, ...) key."""
    return int(np.random.SeedSequence(list(key)).generate_state(1)[0])


@dataclass(frozen=True)
class RunRecord:
    repetition: int
    family: str
    params: dict
    report: ErrorReport
    n_iter: int | None = None
    stop_reason: str | None = None


@dataclass(frozen=True)
class SummaryRow:
    family: str
    rmse_mean: float
    rmse_std: float
    mae_mean: float
    mae_std: float
    mape_mean: float
    mape_std: float
    mape_excluded: int
    repetitions: int


@dataclass
class ExperimentResult:
    target: str
    families: tuple[str, ...]
    records: list[RunRecord] = field(default_factory=list)
    best_models: dict[str, TrainedEstimator] = field(default_factory=dict)

    def reports(self, family: str) -> list[ErrorReport]:
        return [r.report for r in self.records if r.family == family]

    def summary(self) -> list[SummaryRow]:
        rows = []
        for fam in self.families:
            reps = self.reports(fam)
            a = {k: np.array([getattr(r, k) for r in reps]) for k in ("rmse", "mae", "mape")}
            # population std (ddof=0): a single repetition has spread 0
            rows.append(SummaryRow(fam, float(a["rmse"].mean()), float(a["rmse"].std()),
                                   float(a["mae"].mean()), float(a["mae"].std()),
                                   float(a["mape"].mean()), float(a["mape"].std()),
                                   int(sum(r.n_mape_excluded for r in reps)), len(reps)))
        return rows

    def mae_means(self) -> dict[str, float]:
        return {r.family: r.mae_mean for r in self.summary()}

    def write_csv(self, path: str | Path) -> None:
        write_rows(path, TABLE_COLUMNS, [tuple(asdict(r).values()) for r in self.summary()])

    def to_dict(self) -> dict:
        return {"target": self.target, "families": list(self.families),
                "summary": [asdict(r) for r in self.summary()],
                "runs": [{"repetition": r.repetition, "family": r.family, "params": r.params,
                          "n_iter": r.n_iter, "stop_reason": r.stop_reason, **r.report.to_dict()}
                         for r in self.records]}

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))


def read_table_csv(path: str | Path) -> dict[str, dict[str, float]]:
    from ..core import read_table
    header, rows = read_table(path)
    out = {}
    for r in rows:
        d = dict(zip(header, r))
        out[d["family"]] = {k: float(v) for k, v in d.items() if k != "family"}
    return out


def run_experiment(dataset: Dataset, families: Sequence[str] = FAMILIES, repetitions: int = 100,
                   seed: int = 0, fractions=(0.7, 0.2, 0.1), grids: Mapping[str, Sequence[dict]] | None = None,
                   k: int = 3, by_flight: bool = False,
                   progress: Callable[[int, str], None] | None = None) -> ExperimentResult:
    """Fresh split per repetition, CV on train, early stopping on validation, scores on test.

    A failing repetition raises: partial tables are never returned.
    """
    families = tuple(check_family(f) for f in families)
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    grids = dict(grids or {})
    X, y = dataset.X, dataset.y
    result = ExperimentResult(dataset.target, families)
    best_mae: dict[str, float] = {}
    for rep in range(repetitions):
        sp = split(dataset, fractions, seed=stream_seed(seed, rep), by_flight=by_flight)
        Xtr, ytr = X[sp.train], y[sp.train]
        Xva, yva = X[sp.validation], y[sp.validation]
        Xte, yte = X[sp.test], y[sp.test]
        for fam in families:
            spec = EstimatorSpec(fam, {}, tuple(grids.get(fam, DEFAULT_GRIDS[fam])))
            est = select_and_fit(spec, Xtr, ytr, Xva, yva, k=k, seed=stream_seed(seed, rep, FAMILIES.index(fam)))
            rep_report = metrics(yte, est.predict(Xte))
            result.records.append(RunRecord(rep, fam, est.params, rep_report, est.n_iter, est.stop_reason))
            if fam not in best_mae or rep_report.mae < best_mae[fam]:
                best_mae[fam] = rep_report.mae
                result.best_models[fam] = est
            if progress is not None:
                progress(rep, fam)
    return result


@dataclass(frozen=True)
class BoundRow:
    family: str
    mae_mean: float
    r: float
    total_abs: float
    total_rel_pct: float | None  # None when the mean surrogate does not exceed r

    def as_row(self):
        return (self.family, self.mae_mean, self.r, self.total_abs,
                "N/A" if self.total_rel_pct is None else self.total_rel_pct)


def bound_report(mae_means: Mapping[str, float] | ExperimentResult, r: float, mean_phi: float) -> list[BoundRow]:
    """Absolute and relative total-error bounds from per-family MAE means."""
    if isinstance(mae_means, ExperimentResult):
        mae_means = mae_means.mae_means()
    rows = []
    for fam, mae in mae_means.items():
        try:
            rel = physics.total_bound_rel(r, mae, mean_phi)
        except physics.BoundUndefinedError:
            rel = None
        rows.append(BoundRow(fam, float(mae), float(r), physics.total_bound_abs(r, mae), rel))
    return rows


def write_bounds_csv(rows: Sequence[BoundRow], path: str | Path) -> None:
    write_rows(path, BOUND_COLUMNS, [r.as_row() for r in rows])


@dataclass(frozen=True, eq=False)
class CurveSet:
    alphas: np.ndarray
    mach: np.ndarray
    raw: np.ndarray      # (n_alpha, n_mach)
    smooth: np.ndarray

    def rows(self):
        for i, a in enumerate(self.alphas):
            for j, m in enumerate(self.mach):
                yield float(a), float(m), float(self.raw[i, j]), float(self.smooth[i, j])

    def write_csv(self, path: str | Path) -> None:
        write_rows(path, CURVE_COLUMNS, self.rows())


def prediction_curves(estimator: TrainedEstimator, alphas, mach_grid, penalty: str | float = "gcv",
                      min_smooth_points: int = 5) -> CurveSet:
    """Predictions along Mach at fixed angles of attack plus a smoothing-spline overlay."""
    alphas = np.atleast_1d(np.asarray(alphas, float))
    mach = np.atleast_1d(np.asarray(mach_grid, float))
    if alphas.size == 0 or mach.size == 0:
        raise ValueError("empty angle-of-attack list or Mach grid")
    if np.any(np.diff(mach) <= 0):
        raise ValueError("Mach grid must be strictly increasing")
    raw = np.array([estimator.predict(np.column_stack([np.full(mach.size, a), mach])) for a in alphas])
    if mach.size < min_smooth_points:
        return CurveSet(alphas, mach, raw, raw.copy())
    sm = np.array([smooth(mach, r, penalty).fitted for r in raw])
    return CurveSet(alphas, mach, raw, sm)
