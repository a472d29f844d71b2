"""Tuning-parameter calibration and tuning-free significance tests.

``global_test`` tests ``beta* = 0`` with ``T = 2 ||X^T Y||_inf / n``.
``partial_test`` tests ``beta*_B = 0`` while keeping the low-dimensional block
``X_A`` unpenalized: both sides of the model are projected onto the
orthogonal complement of ``span(X_A)`` and the global test is run on the
projected data.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data_model import Dataset, RngSpec
from .effective_noise import EffectiveNoiseEstimate, estimate_lambda_hat
from .lasso import fit as lasso_fit, kkt_check

RECOMMENDED_ALPHA = (0.01, 0.1)


class RankDeficiencyError(ValueError):
    def __init__(self, message: str, column: int):
        super().__init__(message)
        self.column = column


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


@dataclass(frozen=True)
class CalibrationReport:
    lambda_hat: float
    delta: float
    lam: float  # (1 + delta) * lambda_hat, the tuning parameter actually used
    beta_hat: np.ndarray = field(repr=False)
    kkt_gap: float
    ell_infty_bound: float | None
    prediction_bound: float
    estimate: EffectiveNoiseEstimate = field(repr=False)
    phi: float | None = None

    def to_dict(self, column_names: Sequence[str] | None = None) -> dict:
        out = {
            "lambda_hat": self.lambda_hat,
            "delta": self.delta,
            "lambda": self.lam,
            "beta_hat": self.beta_hat.tolist(),
            "support": np.flatnonzero(self.beta_hat).tolist(),
            "kkt_gap": self.kkt_gap,
            "phi": self.phi,
            "ell_infty_bound": self.ell_infty_bound,
            "prediction_bound": self.prediction_bound,
            "prediction_bound_note": "plug-in: ||beta_hat||_1 replaces ||beta*||_1, not a guarantee",
            "estimate": self.estimate.to_dict(),
        }
        if column_names is not None:
            out["columns"] = list(column_names)
        return out


def calibrate(
    data: Dataset,
    alpha: float = 0.05,
    delta: float = 0.0,
    phi: float | None = None,
    L: int = 100,
    M: int = 100,
    rng: RngSpec | None = None,
) -> CalibrationReport:
    """Fit the lasso at ``(1 + delta) * lambda_hat``.

    With ``phi`` (an l_inf restricted-eigenvalue constant of the design)
    the report includes the sup-norm error bound ``(2 / phi)(1 + delta) lambda_hat``.
    """
    _check_alpha(alpha)
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if phi is not None and phi <= 0:
        raise ValueError("phi must be positive")
    lo, hi = RECOMMENDED_ALPHA
    if not lo <= alpha <= hi:
        warnings.warn(
            f"alpha={alpha} is outside the recommended calibration range [{lo}, {hi}]",
            UserWarning,
            stacklevel=2,
        )
    est = estimate_lambda_hat(data, alpha, L, M, rng)
    lam = (1.0 + delta) * est.lambda_hat
    fit = lasso_fit(data, lam)
    ell_inf = None if phi is None else (2.0 / phi) * lam
    return CalibrationReport(
        lambda_hat=est.lambda_hat,
        delta=float(delta),
        lam=lam,
        beta_hat=fit.beta,
        kkt_gap=kkt_check(data, fit),
        ell_infty_bound=ell_inf,
        prediction_bound=2.0 * est.lambda_hat * float(np.sum(np.abs(fit.beta))),
        estimate=est,
        phi=phi,
    )


@dataclass(frozen=True)
class GlobalTestResult:
    T: float
    lambda_hat_alpha: float
    alpha: float
    reject: bool
    p: int
    estimate: EffectiveNoiseEstimate = field(repr=False)

    def to_dict(self) -> dict:
        return _test_dict("global", self, [], list(range(self.p)))


@dataclass(frozen=True)
class PartialTestResult:
    A: tuple[int, ...]
    B: tuple[int, ...]
    T_B: float
    lambda_hat_alpha_B: float
    alpha: float
    reject: bool
    projection_rank: int
    estimate: EffectiveNoiseEstimate = field(repr=False)

    @property
    def T(self) -> float:
        return self.T_B

    @property
    def lambda_hat_alpha(self) -> float:
        return self.lambda_hat_alpha_B

    def to_dict(self) -> dict:
        out = _test_dict("partial", self, list(self.A), list(self.B))
        out["projection_rank"] = self.projection_rank
        return out


def _test_dict(kind, res, A, B) -> dict:
    est = res.estimate
    return {
        "test": kind,
        "alpha": res.alpha,
        "statistic": res.T,
        "critical_value": res.lambda_hat_alpha,
        "reject": res.reject,
        "A": A,
        "B": B,
        "settings": {"L": est.L, "M": est.M},
        "seed": est.seed,
        "estimate": est.to_dict(),
    }


def reject_decision(statistic: float, critical_value: float) -> bool:
    return bool(statistic > critical_value)


def global_test(
    data: Dataset,
    alpha: float = 0.05,
    L: int = 100,
    M: int = 100,
    rng: RngSpec | None = None,
) -> GlobalTestResult:
    """Reject ``beta* = 0`` when ``T = lambda_bar > lambda_hat_alpha``."""
    _check_alpha(alpha)
    est = estimate_lambda_hat(data, alpha, L, M, rng)
    T = est.lambda_bar
    return GlobalTestResult(
        T, est.lambda_hat, float(alpha), reject_decision(T, est.lambda_hat), data.p, est
    )


def _qr_checked(X_A: np.ndarray):
    n, k = X_A.shape
    if k >= n:
        raise RankDeficiencyError(f"|A| = {k} must be smaller than n = {n}", column=k - 1)
    Q, R = np.linalg.qr(X_A, mode="reduced")
    d = np.abs(np.diag(R))
    thresh = 1e-10 * max(float(d.max(initial=0.0)), np.finfo(float).tiny)
    bad = np.flatnonzero(d <= thresh)
    if bad.size:
        j = int(bad[0])
        raise RankDeficiencyError(
            f"X_A is rank deficient: column {j} lies in the span of the columns before it",
            column=j,
        )
    return Q


def residualize(X_A: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Apply ``P = I - X_A (X_A^T X_A)^{-1} X_A^T`` to V via a thin QR of X_A."""
    X_A = np.asarray(X_A, dtype=np.float64)
    if X_A.ndim == 1:
        X_A = X_A[:, None]
    V = np.asarray(V, dtype=np.float64)
    Q = _qr_checked(X_A)
    return V - Q @ (Q.T @ V)


@dataclass(frozen=True)
class ProjectedModel:
    PX_B: np.ndarray
    PY: np.ndarray
    rank_A: int

    def dataset(self) -> Dataset:
        return Dataset(self.PX_B, self.PY)


def _split(p: int, A: Sequence[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    A = tuple(int(a) for a in A)
    if len(set(A)) != len(A):
        raise ValueError(f"A contains duplicates: {A}")
    for a in A:
        if not 0 <= a < p:
            raise ValueError(f"index {a} in A is out of range for p = {p}")
    A = tuple(sorted(A))
    B = tuple(j for j in range(p) if j not in set(A))
    if not B:
        raise ValueError("A covers every column; B would be empty")
    return A, B


def project(data: Dataset, A: Sequence[int]) -> tuple[ProjectedModel, tuple[int, ...], tuple[int, ...]]:
    A, B = _split(data.p, A)
    X_B = data.X[:, list(B)]
    if not A:
        return ProjectedModel(X_B, data.Y.copy(), 0), A, B
    try:
        Q = _qr_checked(data.X[:, list(A)])
    except RankDeficiencyError as exc:
        col = A[min(exc.column, len(A) - 1)]
        raise RankDeficiencyError(
            f"X_A is rank deficient at column {col} ({exc})", column=col
        ) from None
    PX_B = X_B - Q @ (Q.T @ X_B)
    PY = data.Y - Q @ (Q.T @ data.Y)
    return ProjectedModel(PX_B, PY, len(A)), A, B


def partial_test(
    data: Dataset,
    A: Sequence[int],
    alpha: float = 0.05,
    L: int = 100,
    M: int = 100,
    rng: RngSpec | None = None,
) -> PartialTestResult:
    """Test ``beta*_B = 0`` where B is the complement of the 0-based index set A.

    With ``A`` empty the projection is the identity and the result equals
    :func:`global_test` bit for bit.
    """
    _check_alpha(alpha)
    model, A, B = project(data, A)
    est = estimate_lambda_hat(model.dataset(), alpha, L, M, rng)
    T_B = est.lambda_bar
    return PartialTestResult(
        A, B, T_B, est.lambda_hat, float(alpha), reject_decision(T_B, est.lambda_hat),
        model.rank_A, est,
    )
