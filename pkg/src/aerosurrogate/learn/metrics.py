from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

MAPE_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class ErrorReport:
    rmse: float
    mae: float
    mape: float            # percent, nan when every target is ~0
    n: int
    n_mape_excluded: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def metrics(y, y_hat) -> ErrorReport:
    """RMSE, MAE and MAPE (%); rows with |y| < 1e-12 are left out of MAPE and counted."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise ValueError("y and y_hat must be 1-D arrays of equal length")
    if y.size == 0:
        raise ValueError("metrics need at least one row")
    err = y - y_hat
    rmse = float(np.sqrt(np.mean(err ** 2)))
    mae = float(np.mean(np.abs(err)))
    keep = np.abs(y) >= MAPE_ZERO_TOL
    mape = float(100.0 * np.mean(np.abs(err[keep]) / np.abs(y[keep]))) if keep.any() else float("nan")
    # sqrt of a rounded mean can land one ulp under the mean absolute error
    return ErrorReport(max(rmse, mae), mae, mape, int(y.size), int((~keep).sum()))
