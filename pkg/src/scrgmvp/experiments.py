"""Monte-Carlo and rolling-window experiment drivers.

Work items (a sample size and a repetition, or a window position) are
independent.  Each derives its RNG seed from ``(base_seed, n, rep)`` only,
results are merged and sorted canonically, so output does not depend on
the number of worker processes.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, DegeneratePrecisionError
from .estimators import (
    ESTIMATOR_IDS,
    CorrectedSpectrumEstimator,
    weights_sce,
    weights_scme,
    weights_scre,
    weights_shre,
    weights_wshre,
)
from .risk_theory import AsymptoticInputs, GridResult, grid_search
from .sampling import ReturnsMatrix, child_seed, generate_returns, random_mean, sample_covariance
from .spectral import fit_spikes, sample_spectrum
from .spiked_model import PortfolioWeights, SpikedCovariance, oracle_risk, portfolio_risk, reference_model

logger = logging.getLogger(__name__)

MEAN_STREAM = 0x6D75  # seed key for the experiment-wide mean vector
ASYMPTOTIC_ID = "scre-asymptotic"
ORACLE_ID = "oracle"
_ORDER = {k: i for i, k in enumerate(ESTIMATOR_IDS + (ORACLE_ID, ASYMPTOTIC_ID))}


@dataclass(frozen=True)
class ExperimentConfig:
    dim: int = 50
    n_grid: tuple[int, ...] = (60, 100, 200)
    reps: int = 1000
    base_seed: int = 0
    estimators: tuple[str, ...] = ESTIMATOR_IDS
    grid_resolution: int = 100
    grid_refine: int = 10
    window: int = 200
    horizon: int = 30
    step: int = 1
    spike_counts: tuple[int, int] | None = (3, 1)
    spike_mode: str = "oracle"
    bhat_mode: str = "overlap"
    wshre_c: float = 1.0
    workers: int = 1
    subset: int | None = None
    subset_seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        unknown = set(self.estimators) - set(ESTIMATOR_IDS)
        if unknown:
            raise ConfigError(f"unknown estimators: {sorted(unknown)}")
        if self.spike_mode not in ("oracle", "estimated"):
            raise ConfigError("spike_mode must be 'oracle' or 'estimated'")
        if self.grid_resolution < 2:
            raise ConfigError("grid resolution must be >= 2")
        if self.window < 2 or self.horizon < 2 or self.step < 1:
            raise ConfigError("window and horizon must be >= 2, step >= 1")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")

    def check_synthetic(self) -> None:
        for n in self.n_grid:
            if n <= self.dim:
                raise ConfigError(f"n = {n} must exceed M = {self.dim} (J < 1)")


@dataclass(frozen=True)
class RiskRecord:
    estimator: str
    M: int
    n: int
    rep: int
    seed: int
    risk: float
    phi1: float | None = None
    phi2: float | None = None
    gamma1: float | None = None
    gamma2: float | None = None

    def sort_key(self) -> tuple:
        return (self.n, self.rep, _ORDER.get(self.estimator, len(_ORDER)), self.estimator)


@dataclass(frozen=True)
class SummaryRow:
    estimator: str
    n: int
    mean_risk: float
    stderr: float
    reps: int


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers == 0:
        import os

        workers = os.cpu_count() or 1
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    chunk = max(1, math.ceil(len(items) / (4 * workers)))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def _flatten(groups: Iterable[list[RiskRecord]]) -> list[RiskRecord]:
    out = [r for g in groups for r in g]
    out.sort(key=RiskRecord.sort_key)
    return out


def _scre_params(result: GridResult | None) -> dict:
    if result is None:
        return {}
    return dict(phi1=result.phi1, phi2=result.phi2, gamma1=result.gamma1, gamma2=result.gamma2)


def experiment_mean(model: SpikedCovariance, base_seed: int) -> np.ndarray:
    return random_mean(model.dim, child_seed(base_seed, MEAN_STREAM))


def synthetic_inputs(model: SpikedCovariance, n: int) -> AsymptoticInputs:
    """True spikes and b coefficients at aspect ratio M / n."""
    return AsymptoticInputs.from_model(model, model.dim / n)


# -- consistency of the deterministic equivalent ------------------------------


@dataclass(frozen=True)
class _ConsistencyTask:
    model: SpikedCovariance
    mu: np.ndarray
    n: int
    rep: int
    seed: int
    grid: GridResult


def _consistency_task(task: _ConsistencyTask) -> list[RiskRecord]:
    model, n = task.model, task.n
    panel = generate_returns(model, task.mu, n, task.seed)
    spectrum = sample_spectrum(sample_covariance(panel), n)
    est = CorrectedSpectrumEstimator.from_oracle(model, spectrum)
    w = weights_scre(est, task.grid.params)
    extra = _scre_params(task.grid)
    return [
        RiskRecord("scre", model.dim, n, task.rep, task.seed, portfolio_risk(w, model), **extra),
        RiskRecord(ASYMPTOTIC_ID, model.dim, n, task.rep, task.seed, task.grid.gbar / model.dim, **extra),
    ]


def run_consistency(config: ExperimentConfig, model: SpikedCovariance | None = None) -> list[RiskRecord]:
    """Realised SCRE risk at the grid optimum paired with its deterministic equivalent."""
    model = model or reference_model(config.dim)
    config = replace(config, dim=model.dim)
    config.check_synthetic()
    mu = experiment_mean(model, config.base_seed)
    tasks = []
    for n in config.n_grid:
        grid = grid_search(synthetic_inputs(model, n), config.grid_resolution, config.grid_refine)
        for rep in range(config.reps):
            seed = child_seed(config.base_seed, n, rep)
            tasks.append(_ConsistencyTask(model, mu, n, rep, seed, grid))
    return _flatten(_map(_consistency_task, tasks, config.workers))


# -- synthetic estimator comparison -------------------------------------------


@dataclass(frozen=True)
class _CompareTask:
    model: SpikedCovariance
    mu: np.ndarray
    n: int
    rep: int
    seed: int
    grid: GridResult | None
    config: ExperimentConfig


def _compare_task(task: _CompareTask) -> list[RiskRecord]:
    model, n, cfg = task.model, task.n, task.config
    panel = generate_returns(model, task.mu, n, task.seed)
    try:
        fitted, grid = fit_weights(
            panel,
            cfg,
            oracle_model=model if cfg.spike_mode == "oracle" else None,
            oracle_grid=task.grid,
        )
    except DegeneratePrecisionError as exc:
        logger.warning("n=%d rep=%d skipped: %s", n, task.rep, exc)
        return []
    out = []
    for key, w in fitted.items():
        extra = _scre_params(grid) if key == "scre" else {}
        out.append(RiskRecord(key, model.dim, n, task.rep, task.seed, portfolio_risk(w, model), **extra))
    return out


def run_compare(config: ExperimentConfig, model: SpikedCovariance | None = None) -> list[RiskRecord]:
    """Five-estimator comparison on synthetic panels with true risks w' Sigma w."""
    model = model or reference_model(config.dim)
    config = replace(config, dim=model.dim)
    config.check_synthetic()
    mu = experiment_mean(model, config.base_seed)
    bound = oracle_risk(model)
    tasks = []
    records = []
    for n in config.n_grid:
        grid = None
        if config.spike_mode == "oracle" and "scre" in config.estimators:
            grid = grid_search(synthetic_inputs(model, n), config.grid_resolution, config.grid_refine)
        for rep in range(config.reps):
            tasks.append(_CompareTask(model, mu, n, rep, child_seed(config.base_seed, n, rep), grid, config))
        records.append(RiskRecord(ORACLE_ID, model.dim, n, 0, config.base_seed, bound))
    return _flatten([records] + _map(_compare_task, tasks, config.workers))


# -- fitting on one training panel --------------------------------------------


def fit_weights(
    panel: ReturnsMatrix,
    config: ExperimentConfig,
    oracle_model: SpikedCovariance | None = None,
    oracle_grid: GridResult | None = None,
) -> tuple[dict[str, PortfolioWeights], GridResult | None]:
    """Weights of every configured estimator on one training panel.

    With ``oracle_model`` the spectral estimators use the true spike values
    and b coefficients; otherwise spikes, sigma2 and b are estimated.
    """
    n, M = panel.n, panel.dim
    if n <= M:
        raise DegeneratePrecisionError(f"n = {n} does not exceed M = {M}")
    S = sample_covariance(panel)
    spectral_needed = {"sce", "scre"} & set(config.estimators)
    est = grid = None
    if spectral_needed:
        spectrum = sample_spectrum(S, n)
        if oracle_model is not None:
            est = CorrectedSpectrumEstimator.from_oracle(oracle_model, spectrum)
            inputs = AsymptoticInputs.from_model(oracle_model, spectrum.J)
        else:
            r1, r2 = config.spike_counts if config.spike_counts is not None else (None, None)
            spikes = fit_spikes(spectrum, r1, r2, bhat_mode=config.bhat_mode)
            est = CorrectedSpectrumEstimator.from_estimates(spikes)
            inputs = AsymptoticInputs.from_estimates(spikes)
        if "scre" in config.estimators:
            grid = oracle_grid or grid_search(inputs, config.grid_resolution, config.grid_refine)
    out: dict[str, PortfolioWeights] = {}
    for key in config.estimators:
        if key == "scme":
            out[key] = weights_scme(S)
        elif key == "shre":
            out[key] = weights_shre(panel)
        elif key == "wshre":
            out[key] = weights_wshre(S, n, config.wshre_c)
        elif key == "sce":
            out[key] = weights_sce(est)
        elif key == "scre":
            out[key] = weights_scre(est, grid.params)
    return out, grid


# -- rolling backtest ---------------------------------------------------------


def rolling_windows(
    n_rows: int,
    window: int,
    horizon: int,
    step: int = 1,
    max_windows: int | None = None,
) -> list[tuple[range, range]]:
    """0-based (train, test) row ranges; the test slice follows the training slice."""
    out = []
    start = 0
    while start + window + horizon <= n_rows:
        out.append((range(start, start + window), range(start + window, start + window + horizon)))
        if max_windows is not None and len(out) >= max_windows:
            break
        start += step
    return out


def realized_variance(w: PortfolioWeights | np.ndarray, test: np.ndarray) -> float:
    """Sample variance (ddof=1) of the portfolio return series over the test rows."""
    x = w.weights if isinstance(w, PortfolioWeights) else np.asarray(w, dtype=float)
    return float(np.var(np.asarray(test) @ x, ddof=1))


@dataclass(frozen=True)
class _WindowTask:
    data: np.ndarray
    rep: int
    train: range
    test: range
    seed: int
    config: ExperimentConfig


def _window_task(task: _WindowTask) -> list[RiskRecord]:
    train = ReturnsMatrix(task.data[task.train.start : task.train.stop])
    test = task.data[task.test.start : task.test.stop]
    try:
        fitted, grid = fit_weights(train, task.config)
    except DegeneratePrecisionError as exc:
        logger.warning("window %d skipped: %s", task.rep, exc)
        return []
    M, n = train.dim, train.n
    out = []
    for key, w in fitted.items():
        extra = _scre_params(grid) if key == "scre" else {}
        out.append(RiskRecord(key, M, n, task.rep, task.seed, realized_variance(w, test), **extra))
    return out


def run_backtest(
    config: ExperimentConfig,
    returns: ReturnsMatrix,
    max_windows: int | None = None,
) -> list[RiskRecord]:
    """Rolling-window out-of-sample variance of every estimator.

    ``max_windows`` defaults to ``config.reps``.
    """
    max_windows = config.reps if max_windows is None else max_windows
    windows = rolling_windows(returns.n, config.window, config.horizon, config.step, max_windows)
    if not windows:
        raise DataError(
            f"need at least window + horizon = {config.window + config.horizon} rows, have {returns.n}"
        )
    if config.window <= returns.dim:
        raise ConfigError(f"window {config.window} must exceed the asset count {returns.dim}")
    seed = config.subset_seed if config.subset_seed is not None else 0
    tasks = [
        _WindowTask(returns.data, k, train, test, seed, config)
        for k, (train, test) in enumerate(windows)
    ]
    return _flatten(_map(_window_task, tasks, config.workers))


# -- aggregation --------------------------------------------------------------


def summarize(records: Sequence[RiskRecord]) -> list[SummaryRow]:
    """Mean, standard error (0 for a single record) and count per (estimator, n)."""
    if not records:
        raise ValueError("no records to summarise")
    groups: dict[tuple[str, int], list[float]] = {}
    for r in records:
        groups.setdefault((r.estimator, r.n), []).append(r.risk)
    rows = []
    for (est, n), vals in groups.items():
        v = np.asarray(vals, dtype=float)
        se = float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
        rows.append(SummaryRow(est, n, float(v.mean()), se, int(v.size)))
    rows.sort(key=lambda s: (_ORDER.get(s.estimator, len(_ORDER)), s.estimator, s.n))
    return rows
