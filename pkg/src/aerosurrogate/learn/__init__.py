"""Regression families, cross-validated selection and the experiment harness."""
from .estimators import (
    DEFAULT_GRIDS, FAMILIES, EstimatorSpec, RankError, TrainedEstimator, check_family, fit,
)
from .experiment import (
    BoundRow, CurveSet, ExperimentResult, bound_report, prediction_curves, run_experiment,
)
from .metrics import ErrorReport, metrics
from .selection import CvResult, cv_select, select_and_fit

__all__ = [
    "DEFAULT_GRIDS", "FAMILIES", "EstimatorSpec", "RankError", "TrainedEstimator", "check_family", "fit",
    "BoundRow", "CurveSet", "ExperimentResult", "bound_report", "prediction_curves", "run_experiment",
    "ErrorReport", "metrics", "CvResult", "cv_select", "select_and_fit",
]
