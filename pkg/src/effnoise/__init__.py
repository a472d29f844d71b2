"""Calibrated lasso tuning parameters and tuning-free tests via the multiplier bootstrap."""

__version__ = "0.1.0"

from .data_model import DataError, Dataset, GridSpec, RngSpec, load_csv, make_grid, standardize, write_csv
from .effective_noise import EffectiveNoiseEstimate, estimate_lambda_hat, run_bootstrap
from .inference import (
    CalibrationReport,
    GlobalTestResult,
    PartialTestResult,
    RankDeficiencyError,
    calibrate,
    global_test,
    partial_test,
)
from .lasso import ConvergenceError, LassoFit, LassoPath, fit, fit_path, kkt_check

__all__ = [
    "CalibrationReport",
    "ConvergenceError",
    "DataError",
    "Dataset",
    "EffectiveNoiseEstimate",
    "GlobalTestResult",
    "GridSpec",
    "LassoFit",
    "LassoPath",
    "PartialTestResult",
    "RankDeficiencyError",
    "RngSpec",
    "calibrate",
    "estimate_lambda_hat",
    "fit",
    "fit_path",
    "global_test",
    "kkt_check",
    "load_csv",
    "make_grid",
    "partial_test",
    "run_bootstrap",
    "standardize",
    "write_csv",
]
