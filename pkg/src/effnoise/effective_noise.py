"""Multiplier-bootstrap estimate of the quantiles of the lasso's effective noise.

For a data set (X, Y) the effective noise is ``2 ||X^T eps||_inf / n``. Its
(1 - alpha)-quantile is estimated by:

1. fitting the lasso on the equidistant grid ``lambda_bar * m / M`` and
   drawing L standard normal multiplier vectors e,
2. computing, per grid point, the empirical (1 - alpha)-quantile of the
   criterion ``max_j |(2/n) sum_i X_ij r_i(lambda) e_i|`` over the L draws,
3. taking the smallest grid index from which that quantile curve stays at or
   below the 45-degree line, and returning the curve's value there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data_model import Dataset, GridSpec, RngSpec, make_grid
from .lasso import ConvergenceError, LassoPath, _Problem

QUANTILE_RULE = "order statistic v_(ceil((1-alpha)*L))"


@dataclass(frozen=True)
class MultiplierDraws:
    e_matrix: np.ndarray  # (L, n)

    @property
    def L(self) -> int:
        return self.e_matrix.shape[0]


@dataclass(frozen=True)
class CriterionTable:
    grid: GridSpec
    values: np.ndarray  # (M, L)


@dataclass(frozen=True)
class EffectiveNoiseEstimate:
    alpha: float
    lambda_hat: float
    m_hat: int
    quantile_curve: np.ndarray = field(repr=False)
    grid: GridSpec = field(repr=False)
    degenerate: bool
    fallback: bool
    L: int
    M: int
    seed: int
    psi_diagnostic: float = float("nan")

    @property
    def lambda_bar(self) -> float:
        return self.grid.lambda_bar

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "lambda_hat": self.lambda_hat,
            "m_hat": self.m_hat,
            "fallback": self.fallback,
            "degenerate": self.degenerate,
            "lambda_bar": self.lambda_bar,
            "grid": self.grid.lambdas.tolist(),
            "quantile_curve": self.quantile_curve.tolist(),
            "settings": {"L": self.L, "M": self.M, "seed": self.seed},
            "quantile_rule": QUANTILE_RULE,
            "psi_diagnostic": self.psi_diagnostic,
        }

    @classmethod
    def from_dict(cls, d: dict) -> EffectiveNoiseEstimate:
        lambdas = np.asarray(d["grid"], dtype=np.float64)
        grid = GridSpec(len(lambdas), float(d["lambda_bar"]), lambdas)
        s = d["settings"]
        return cls(
            alpha=float(d["alpha"]),
            lambda_hat=float(d["lambda_hat"]),
            m_hat=int(d["m_hat"]),
            quantile_curve=np.asarray(d["quantile_curve"], dtype=np.float64),
            grid=grid,
            degenerate=bool(d["degenerate"]),
            fallback=bool(d["fallback"]),
            L=int(s["L"]),
            M=int(s["M"]),
            seed=int(s["seed"]),
            psi_diagnostic=float(d["psi_diagnostic"]),
        )


def draw_multipliers(rng: RngSpec, L: int, n: int) -> MultiplierDraws:
    """Row l comes from substream ("multiplier", l)."""
    e = np.empty((L, n))
    for ell in range(L):
        e[ell] = rng.generator("multiplier", ell).standard_normal(n)
    return MultiplierDraws(e)


def criterion_value(X: np.ndarray, residuals: np.ndarray, e: np.ndarray) -> float:
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if residuals.shape != (n,) or e.shape != (n,):
        raise ValueError("X, residuals and e must agree in length")
    return float(np.max(np.abs(2.0 * (X.T @ (residuals * e)) / n)))


def _criterion_rows(X: np.ndarray, R: np.ndarray, E: np.ndarray) -> np.ndarray:
    """values[m, l] for residual columns R[:, m] and multiplier rows E[l]."""
    n = X.shape[0]
    out = np.empty((R.shape[1], E.shape[0]))
    for m in range(R.shape[1]):
        out[m] = np.max(np.abs((E * R[:, m]) @ X), axis=1)
    out *= 2.0 / n
    return out


def criterion_table(data: Dataset, path: LassoPath, draws: MultiplierDraws) -> CriterionTable:
    if draws.e_matrix.shape[1] != data.n:
        raise ValueError("multiplier draws do not match the number of observations")
    values = _criterion_rows(data.X, path.residual_matrix(), draws.e_matrix)
    return CriterionTable(path.grid, values)


def empirical_quantile(samples, alpha: float) -> float:
    """Ascending order statistic ``v_(k)`` with ``k = ceil((1 - alpha) L)``."""
    v = np.asarray(samples, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("empty sample")
    return float(np.sort(v)[_order_index(alpha, v.size)])


def _order_index(alpha: float, L: int) -> int:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    # the 1e-9 slack keeps e.g. (1 - 0.05) * 100 from rounding up to 96
    k = math.ceil((1.0 - alpha) * L - 1e-9)
    return min(max(k, 1), L) - 1


def quantile_curve(table: CriterionTable, alpha: float) -> np.ndarray:
    k = _order_index(alpha, table.values.shape[1])
    return np.sort(table.values, axis=1)[:, k]


def fixed_point_select(grid: GridSpec, curve) -> tuple[int, bool]:
    """Return ``(m_hat, fallback)``.

    ``m_hat`` is the smallest index from which ``curve <= grid`` holds at
    every later grid point. When the condition already fails at the last
    point, ``m_hat`` is the last index and ``fallback`` is True.
    """
    curve = np.asarray(curve)
    lambdas = grid.lambdas
    if curve.shape != lambdas.shape:
        raise ValueError("quantile curve and grid differ in length")
    below = curve <= lambdas
    if not below[-1]:
        return grid.M - 1, True
    failing = np.flatnonzero(~below)
    return (int(failing[-1]) + 1 if failing.size else 0), False


def gaussian_bound_psi(C_X: float, C_sigma: float, n: int, p: int) -> float:
    """``C_X C_sigma [sqrt(2 log 2p) + sqrt(2 log max(n, p))]``.

    Upper bound on the Gaussian-proxy quantile of ``||X^T eps||_inf / sqrt(n)``;
    multiply by ``2 / sqrt(n)`` to put it on the lambda scale.
    """
    if C_X < 0 or C_sigma < 0:
        raise ValueError("C_X and C_sigma must be nonnegative")
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    return C_X * C_sigma * (math.sqrt(2 * math.log(2 * p)) + math.sqrt(2 * math.log(max(n, p))))


@dataclass(frozen=True)
class BootstrapRun:
    """Everything needed to read off estimates at any level alpha.

    ``path`` is fitted on the columns permuted by ``column_order``.
    """

    data: Dataset
    grid: GridSpec
    path: LassoPath | None
    table: CriterionTable | None
    L: int
    seed: int
    column_order: np.ndarray = field(repr=False, default=None)

    def estimate(self, alpha: float) -> EffectiveNoiseEstimate:
        M = self.grid.M
        if self.table is None:
            _order_index(alpha, self.L)
            return EffectiveNoiseEstimate(
                alpha, 0.0, M - 1, np.zeros(M), self.grid, True, False, self.L, M, self.seed, 0.0
            )
        curve = quantile_curve(self.table, alpha)
        m_hat, fallback = fixed_point_select(self.grid, curve)
        r = self.path.fits[m_hat].residuals
        c_sigma = float(np.sqrt(np.mean(r**2)))
        c_x = float(np.max(np.abs(self.data.X)))
        n, p = self.data.n, self.data.p
        psi = 2.0 / math.sqrt(n) * gaussian_bound_psi(c_x, c_sigma, n, p)
        return EffectiveNoiseEstimate(
            float(alpha), float(curve[m_hat]), m_hat, curve, self.grid,
            False, fallback, self.L, M, self.seed, psi,
        )


def canonical_column_order(X: np.ndarray) -> np.ndarray:
    """Permutation sorting the columns of X lexicographically by their entries."""
    return np.lexsort(X[::-1])


def run_bootstrap(data: Dataset, L: int = 100, M: int = 100, rng: RngSpec | None = None) -> BootstrapRun:
    """Steps 1 and 2: grid, warm-started lasso path, multipliers, criterion table.

    Columns are put in a canonical order first so that the result does not
    depend on how the caller ordered them.
    """
    if L < 1 or M < 1:
        raise ValueError("L and M must be positive")
    rng = rng if rng is not None else RngSpec(0)
    order = canonical_column_order(data.X)
    X = np.asfortranarray(data.X[:, order])
    prob = _Problem(X, data.Y)
    grid = make_grid(prob.lambda_bar, M)
    if grid.degenerate:
        return BootstrapRun(data, grid, None, None, L, rng.seed, order)
    prob.warn_zero_columns()
    try:
        path = prob.path(grid)
    except ConvergenceError as exc:
        raise ConvergenceError(
            f"lasso path failed at grid index {exc.grid_index}: {exc}", exc.best, exc.grid_index
        ) from exc
    draws = draw_multipliers(rng, L, data.n)
    values = _criterion_rows(X, path.residual_matrix(), draws.e_matrix)
    return BootstrapRun(data, grid, path, CriterionTable(grid, values), L, rng.seed, order)


def estimate_lambda_hat(
    data: Dataset,
    alpha: float = 0.05,
    L: int = 100,
    M: int = 100,
    rng: RngSpec | None = None,
) -> EffectiveNoiseEstimate:
    """Estimate the (1 - alpha)-quantile of ``2 ||X^T eps||_inf / n``.

    A response that is identically zero gives ``lambda_bar = 0``; the estimate
    is then 0 with ``degenerate=True`` and no fitting is done.
    """
    _order_index(alpha, L)
    return run_bootstrap(data, L, M, rng).estimate(alpha)
