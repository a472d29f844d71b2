"""Synthetic data, Monte Carlo oracle quantiles, cross-validation and experiment runners.

Every random quantity is drawn from its own substream of the config seed,
keyed by purpose and replicate, so replicates can run in any order (or
concurrently) and still give identical reports.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data_model import Dataset, GridSpec, RngSpec, make_grid
from .effective_noise import empirical_quantile, run_bootstrap, criterion_value, _order_index
from .lasso import ConvergenceError, _Problem, path_from_arrays

log = logging.getLogger(__name__)

LAWS = ("gaussian", "t")
METHODS = ("ours", "oracle", "cv")
LOSSES = ("hamming", "ell1", "ell_infty", "prediction")


@dataclass(frozen=True)
class ScenarioConfig:
    n: int = 200
    p: int = 250
    kappa: float = 0.25
    design_law: str = "gaussian"
    design_df: float | None = None
    noise_law: str = "gaussian"
    noise_df: float | None = None
    sigma: float = 1.0
    snr: float = 1.0
    support_size: int = 5
    alpha: float = 0.05
    L: int = 100
    M: int = 100
    N_runs: int = 100
    delta: float = 0.0
    seed: int = 0
    oracle_draws: int = 1000
    cv_folds: int = 10
    test_snrs: tuple[float, ...] = (0.0, 0.1, 0.2)
    test_alphas: tuple[float, ...] = (0.01, 0.05, 0.1)
    hist_bins: int = 30
    plugin: bool = False

    def __post_init__(self):
        object.__setattr__(self, "test_snrs", tuple(float(s) for s in self.test_snrs))
        object.__setattr__(self, "test_alphas", tuple(float(a) for a in self.test_alphas))
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if not 0.0 <= self.kappa < 1.0:
            raise ValueError(f"kappa must lie in [0, 1), got {self.kappa}")
        for name in ("design", "noise"):
            law, df = getattr(self, f"{name}_law"), getattr(self, f"{name}_df")
            if law not in LAWS:
                raise ValueError(f"{name}_law must be one of {LAWS}, got {law!r}")
            if law == "t" and (df is None or df < 5):
                raise ValueError(f"{name}_df must be >= 5 for a t law, got {df}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.snr < 0 or any(s < 0 for s in self.test_snrs):
            raise ValueError("snr must be nonnegative")
        if not 0 <= self.support_size <= self.p:
            raise ValueError(f"support_size must lie in [0, p], got {self.support_size}")
        for a in (self.alpha, *self.test_alphas):
            if not 0.0 < a < 1.0:
                raise ValueError(f"alpha must lie in (0, 1), got {a}")
        if min(self.L, self.M, self.N_runs, self.oracle_draws, self.hist_bins) < 1:
            raise ValueError("L, M, N_runs, oracle_draws and hist_bins must be positive")
        if not 2 <= self.cv_folds <= self.n:
            raise ValueError(f"cv_folds must lie in [2, n], got {self.cv_folds}")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> ScenarioConfig:
        with open(path) as fh:
            d = json.load(fh)
        if not isinstance(d, dict):
            raise ValueError("scenario config must be a JSON object")
        d.pop("experiments", None)
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["test_snrs"] = list(self.test_snrs)
        d["test_alphas"] = list(self.test_alphas)
        return d

    def with_(self, **changes) -> ScenarioConfig:
        d = asdict(self)
        d.update(changes)
        return ScenarioConfig(**d)


def _t_scale(gen: np.random.Generator, df: float, size) -> np.ndarray:
    """Divisors sqrt(chi2_d / d) times the factor sqrt(d / (d - 2)) that brings the variance to 1."""
    return np.sqrt(gen.chisquare(df, size) / df) * math.sqrt(df / (df - 2.0))


def sample_design(config: ScenarioConfig, rng: RngSpec, replicate: int) -> np.ndarray:
    """Rows with covariance ``(1 - kappa) I + kappa * 11^T`` via a one-factor draw."""
    gen = rng.generator("design", replicate)
    n, p, k = config.n, config.p, config.kappa
    X = gen.standard_normal((n, p))
    if k > 0:
        X *= math.sqrt(1.0 - k)
        X += math.sqrt(k) * gen.standard_normal(n)[:, None]
    if config.design_law == "t":
        X /= _t_scale(gen, config.design_df, n)[:, None]
    return np.asfortranarray(X)


def sample_noise(config: ScenarioConfig, rng: RngSpec, replicate: int, count: int | None = None) -> np.ndarray:
    gen = rng.generator("noise", replicate)
    count = config.n if count is None else count
    eps = gen.standard_normal(count)
    if config.noise_law == "t":
        eps /= _t_scale(gen, config.noise_df, count)
    return config.sigma * eps


def support_indicator(p: int, s: int) -> np.ndarray:
    v = np.zeros(p)
    v[:s] = 1.0
    return v


def calibrate_beta_star(X: np.ndarray, config: ScenarioConfig, snr: float | None = None):
    """Return ``(beta_star, c)`` with the first ``support_size`` entries equal to c
    and ``sqrt(||X beta_star||^2 / n) / sigma`` equal to the SNR."""
    snr = config.snr if snr is None else snr
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    v = support_indicator(p, config.support_size)
    if snr == 0:
        return np.zeros(p), 0.0
    norm = float(np.linalg.norm(X @ v))
    if norm == 0.0:
        raise ValueError("X v = 0: no signal of positive SNR can be placed on the support")
    c = snr * config.sigma * math.sqrt(n) / norm
    return c * v, c


@dataclass(frozen=True)
class SimulatedTruth:
    beta_star: np.ndarray = field(repr=False)
    epsilon: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)
    c: float

    @property
    def Y(self) -> np.ndarray:
        return self.X @ self.beta_star + self.epsilon

    def dataset(self) -> Dataset:
        return Dataset(self.X, self.Y)


def draw_truth(config: ScenarioConfig, rng: RngSpec, replicate: int, snr: float | None = None) -> SimulatedTruth:
    X = sample_design(config, rng, replicate)
    eps = sample_noise(config, rng, replicate)
    beta, c = calibrate_beta_star(X, config, snr)
    return SimulatedTruth(beta, eps, X, c)


def effective_noise_draws(config: ScenarioConfig, R: int, rng: RngSpec) -> np.ndarray:
    """R independent values of ``2 ||X^T eps||_inf / n`` with fresh X and eps each time."""
    if R < 1:
        raise ValueError("R must be at least 1")
    sub = rng.child("oracle")
    out = np.empty(R)
    for k in range(R):
        X = sample_design(config, sub, k)
        eps = sample_noise(config, sub, k)
        out[k] = 2.0 * float(np.max(np.abs(X.T @ eps))) / config.n
    return out


def oracle_lambda_star(config: ScenarioConfig, alpha: float, R: int, rng: RngSpec) -> float:
    """Empirical (1 - alpha)-quantile of the effective noise over R simulated draws."""
    return empirical_quantile(effective_noise_draws(config, R, rng), alpha)


def cv_curve(data: Dataset, grid: GridSpec, folds: int, rng: RngSpec) -> np.ndarray:
    """Pooled held-out mean squared prediction error per grid point."""
    n = data.n
    if not 2 <= folds <= n:
        raise ValueError(f"folds must lie in [2, n={n}], got {folds}")
    perm = rng.generator("cv-folds").permutation(n)
    blocks = np.array_split(perm, folds)
    sse = np.zeros(grid.M)
    for test in blocks:
        if test.size == 0:
            raise ValueError("empty cross-validation fold")
        train = np.setdiff1d(perm, test, assume_unique=True)
        path = path_from_arrays(data.X[train], data.Y[train], grid)
        pred = data.X[test] @ path.betas().T
        sse += np.sum((data.Y[test, None] - pred) ** 2, axis=0)
    return sse / n


def cross_validate(data: Dataset, grid: GridSpec, folds: int, rng: RngSpec) -> float:
    """Grid point minimizing the CV error; ties go to the larger lambda."""
    if grid.M == 1:
        return float(grid.lambdas[0])
    err = cv_curve(data, grid, folds, rng)
    best = int(np.flatnonzero(err == err.min())[-1])
    return float(grid.lambdas[best])


@dataclass(frozen=True)
class Losses:
    hamming: int
    ell1: float
    ell_infty: float
    prediction: float

    def as_tuple(self):
        return (self.hamming, self.ell1, self.ell_infty, self.prediction)


def losses(beta: np.ndarray, truth: SimulatedTruth) -> Losses:
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != truth.beta_star.shape:
        raise ValueError("beta and beta_star differ in length")
    d = beta - truth.beta_star
    fit = truth.X @ d
    return Losses(
        hamming=int(np.sum((beta == 0) != (truth.beta_star == 0))),
        ell1=float(np.sum(np.abs(d))),
        ell_infty=float(np.max(np.abs(d), initial=0.0)),
        prediction=float(fit @ fit) / truth.X.shape[0],
    )


def iterated_plugin(data: Dataset, alpha: float, L: int, rng: RngSpec,
                    max_iter: int = 50, rtol: float = 1e-6) -> tuple[float, int]:
    """Comparator: iterate ``lam <- q_alpha(lam)`` from ``lambda_bar``.

    ``q_alpha(lam)`` is the bootstrap quantile of the criterion with the
    residuals of the lasso at ``lam``. Returns the last iterate and the
    number of iterations.
    """
    prob = _Problem(data.X, data.Y)
    lam = prob.lambda_bar
    if lam == 0.0:
        return 0.0, 0
    gens = [rng.generator("multiplier", ell) for ell in range(L)]
    E = np.array([g.standard_normal(data.n) for g in gens])
    k = _order_index(alpha, L)
    beta = None
    for it in range(1, max_iter + 1):
        f = prob.fit(lam, beta)
        beta = f.beta
        vals = np.sort([criterion_value(prob.X, f.residuals, e) for e in E])
        new = float(vals[k])
        if abs(new - lam) <= rtol * max(lam, 1e-300):
            return new, it
        lam = new
    return lam, max_iter


@dataclass
class LossReport:
    """One record per (replicate, method) plus the tuning parameters behind them."""

    records: list[dict]
    lambda_star: float
    lambda_hat: np.ndarray
    lambda_bar: np.ndarray
    lambda_cv: np.ndarray
    failed: list[tuple[int, str]]
    methods: tuple[str, ...] = METHODS

    def values(self, method: str, loss: str) -> np.ndarray:
        return np.array([r[loss] for r in self.records if r["method"] == method])

    @property
    def n_included(self) -> int:
        return len(self.lambda_hat)

    def summary(self) -> dict:
        means = {
            m: {loss: float(np.mean(self.values(m, loss))) if self.n_included else None for loss in LOSSES}
            for m in self.methods
        }
        if self.n_included:
            q1, q3 = np.percentile(self.lambda_hat, [25, 75])
            lam_stats = {
                "lambda_hat_mean": float(np.mean(self.lambda_hat)),
                "lambda_hat_iqr": float(q3 - q1),
                "lambda_bar_mean": float(np.mean(self.lambda_bar)),
                "lambda_cv_mean": float(np.mean(self.lambda_cv)),
            }
        else:
            lam_stats = {}
        return {
            "included_runs": self.n_included,
            "failed_runs": len(self.failed),
            "failures": [{"replicate": r, "error": msg} for r, msg in self.failed],
            "lambda_star": self.lambda_star,
            **lam_stats,
            "mean_losses": means,
        }


def _run_pool(fn, count: int, threads: int):
    if threads <= 1:
        return [fn(r) for r in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


def _calibration_replicate(config: ScenarioConfig, rng: RngSpec, lambda_star: float, r: int):
    truth = draw_truth(config, rng, r)
    data = truth.dataset()
    try:
        boot = run_bootstrap(data, config.L, config.M, rng.child("bootstrap", r))
        lam_hat = boot.estimate(config.alpha).lambda_hat
        lam_cv = cross_validate(data, boot.grid, config.cv_folds, rng.child("cv", r))
        prob = _Problem(data.X, data.Y)
        lams = {
            "ours": (1.0 + config.delta) * lam_hat,
            "oracle": (1.0 + config.delta) * lambda_star,
            "cv": lam_cv,
        }
        if config.plugin:
            lams["plugin"] = (1.0 + config.delta) * iterated_plugin(
                data, config.alpha, config.L, rng.child("plugin", r)
            )[0]
        rows = []
        for method, lam in lams.items():
            beta = prob.fit(lam).beta
            rows.append({"replicate": r, "method": method, "lambda": lam,
                         **asdict(losses(beta, truth))})
    except (ConvergenceError, ValueError) as exc:
        log.warning("replicate %d failed: %s", r, exc)
        return r, None, f"{type(exc).__name__}: {exc}"
    return r, (rows, lam_hat, boot.grid.lambda_bar, lam_cv), None


def run_calibration_experiment(config: ScenarioConfig, threads: int = 1) -> LossReport:
    """Lasso losses at lambda_hat (ours), lambda_star (oracle) and the CV choice."""
    rng = RngSpec(config.seed)
    lambda_star = oracle_lambda_star(config, config.alpha, config.oracle_draws, rng)
    results = _run_pool(lambda r: _calibration_replicate(config, rng, lambda_star, r),
                        config.N_runs, threads)
    records, lh, lb, lc, failed = [], [], [], [], []
    for r, out, err in results:
        if out is None:
            failed.append((r, err))
            continue
        rows, lam_hat, lam_bar, lam_cv = out
        records.extend(rows)
        lh.append(lam_hat)
        lb.append(lam_bar)
        lc.append(lam_cv)
    methods = METHODS + (("plugin",) if config.plugin else ())
    return LossReport(records, lambda_star, np.array(lh), np.array(lb), np.array(lc), failed, methods)


@dataclass
class TestPowerReport:
    """Rejection counts keyed by (snr, alpha, method) with method in {feasible, oracle}."""

    N_runs: int
    snrs: tuple[float, ...]
    alphas: tuple[float, ...]
    counts: dict[tuple[float, float, str], int]
    lambda_star: dict[float, float]
    n: int = 0
    p: int = 0
    decisions: np.ndarray | None = field(default=None, repr=False)  # (N, snr, alpha, 2)

    def rate(self, snr: float, alpha: float, method: str = "feasible") -> float:
        return self.counts[(snr, alpha, method)] / self.N_runs

    def rows(self) -> list[dict]:
        out = []
        for snr in self.snrs:
            for alpha in self.alphas:
                for method in ("feasible", "oracle"):
                    k = self.counts[(snr, alpha, method)]
                    out.append({"n": self.n, "p": self.p, "snr": snr, "alpha": alpha,
                                "method": method, "rejections": k, "N_runs": self.N_runs,
                                "rate": k / self.N_runs})
        return out


def _test_replicate(config: ScenarioConfig, rng: RngSpec, lam_star: dict, r: int) -> np.ndarray:
    X = sample_design(config, rng, r)
    eps = sample_noise(config, rng, r)
    dec = np.zeros((len(config.test_snrs), len(config.test_alphas), 2), dtype=bool)
    for i, snr in enumerate(config.test_snrs):
        beta, _ = calibrate_beta_star(X, config, snr)
        data = Dataset(X, X @ beta + eps)
        try:
            boot = run_bootstrap(data, config.L, config.M, rng.child("bootstrap", r))
        except ConvergenceError as exc:
            raise ConvergenceError(f"replicate {r}, snr {snr}: {exc}", exc.best, exc.grid_index) from exc
        T = boot.grid.lambda_bar
        for j, alpha in enumerate(config.test_alphas):
            dec[i, j, 0] = T > boot.estimate(alpha).lambda_hat
            dec[i, j, 1] = T > lam_star[alpha]
    return dec


def run_test_experiment(config: ScenarioConfig, threads: int = 1) -> TestPowerReport:
    """Feasible global test and the oracle test ``T > lambda_star`` per (snr, alpha).

    Each replicate draws X and eps once and reuses them for every SNR; all
    levels alpha are read off one bootstrap run.
    """
    rng = RngSpec(config.seed)
    draws = effective_noise_draws(config, config.oracle_draws, rng)
    lam_star = {a: empirical_quantile(draws, a) for a in config.test_alphas}
    dec = np.array(_run_pool(lambda r: _test_replicate(config, rng, lam_star, r), config.N_runs, threads))
    counts = {}
    for i, snr in enumerate(config.test_snrs):
        for j, alpha in enumerate(config.test_alphas):
            counts[(snr, alpha, "feasible")] = int(dec[:, i, j, 0].sum())
            counts[(snr, alpha, "oracle")] = int(dec[:, i, j, 1].sum())
    return TestPowerReport(config.N_runs, config.test_snrs, config.test_alphas, counts,
                           lam_star, config.n, config.p, dec)
