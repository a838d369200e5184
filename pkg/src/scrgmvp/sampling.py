"""Synthetic return panels, sample covariance and GMVP weights from a precision."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, DegeneratePrecisionError
from .spiked_model import PortfolioWeights, SpikedCovariance

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def child_seed(base_seed: int, *keys: int) -> int:
    """Derive an independent 63-bit seed from a base seed and integer keys.

    Chained splitmix64, so the seed of repetition ``k`` depends only on
    ``(base_seed, k)`` and never on evaluation order.
    """
    h = _splitmix64(int(base_seed) & _MASK64)
    for k in keys:
        h = _splitmix64(h ^ (int(k) & _MASK64))
    return h >> 1


@dataclass(frozen=True)
class ReturnsMatrix:
    """n x M panel: rows are periods, columns are assets."""

    data: np.ndarray
    labels: tuple[str, ...] | None = None
    dates: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        x = np.array(self.data, dtype=float)
        if x.ndim != 2:
            raise DataError("returns must be a 2-d array")
        if x.shape[0] < 2:
            raise DataError("need at least 2 observations")
        if not np.all(np.isfinite(x)):
            raise DataError("returns contain non-finite entries")
        x.setflags(write=False)
        object.__setattr__(self, "data", x)
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != x.shape[1]:
                raise DataError("label count does not match asset count")
            object.__setattr__(self, "labels", labels)
        if self.dates is not None:
            dates = tuple(str(d) for d in self.dates)
            if len(dates) != x.shape[0]:
                raise DataError("date count does not match row count")
            object.__setattr__(self, "dates", dates)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def rows(self, start: int, stop: int) -> ReturnsMatrix:
        dates = self.dates[start:stop] if self.dates is not None else None
        return ReturnsMatrix(self.data[start:stop], self.labels, dates)

    def columns(self, idx: Sequence[int]) -> ReturnsMatrix:
        idx = list(idx)
        labels = tuple(self.labels[i] for i in idx) if self.labels is not None else None
        return ReturnsMatrix(self.data[:, idx], labels, self.dates)


def random_mean(dim: int, seed) -> np.ndarray:
    """Mean vector with i.i.d. Uniform(-1, 1) entries."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=dim)


def generate_returns(
    model: SpikedCovariance,
    mu: np.ndarray,
    n: int,
    seed,
) -> ReturnsMatrix:
    """Draw n i.i.d. Gaussian rows mu + Sigma^{1/2} x."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (model.dim,):
        raise ValueError(f"mean has shape {mu.shape}, model dimension is {model.dim}")
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, model.dim))
    V = model.vectors
    coef = np.sqrt(1.0 + model.lambdas) - 1.0
    y = np.sqrt(model.sigma2) * (x + ((x @ V) * coef) @ V.T)
    return ReturnsMatrix(y + mu)


def sample_covariance(returns: ReturnsMatrix | np.ndarray) -> np.ndarray:
    """Unbiased sample covariance with the 1/(n-1) divisor."""
    y = returns.data if isinstance(returns, ReturnsMatrix) else np.asarray(returns, dtype=float)
    n = y.shape[0]
    if n < 2:
        raise DataError("sample covariance needs n >= 2")
    yc = y - y.mean(axis=0)
    S = yc.T @ yc / (n - 1)
    return 0.5 * (S + S.T)


@dataclass(frozen=True)
class LowRankPrecision:
    """Precision of the form ``I_M - U diag(coeffs) U'`` with orthonormal U columns."""

    vectors: np.ndarray
    coeffs: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x - self.vectors @ (self.coeffs * (self.vectors.T @ x))

    def dense(self) -> np.ndarray:
        return np.eye(self.dim) - (self.vectors * self.coeffs) @ self.vectors.T


def gmvp_from_precision(
    C: np.ndarray | LowRankPrecision,
    estimator_id: str = "",
    params: tuple[float, float] | None = None,
) -> PortfolioWeights:
    """Weights C1 / (1'C1) for a dense or low-rank precision."""
    if isinstance(C, LowRankPrecision):
        return _weights_from_c1(C.apply(np.ones(C.dim)), estimator_id, params)
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("precision must be a square matrix")
    return _weights_from_c1(C.sum(axis=1), estimator_id, params)


def _weights_from_c1(
    c1: np.ndarray,
    estimator_id: str = "",
    params: tuple[float, float] | None = None,
) -> PortfolioWeights:
    total = float(c1.sum())
    if not np.isfinite(total) or not np.all(np.isfinite(c1)) or total == 0.0:
        raise DegeneratePrecisionError(f"1'C1 = {total!r}")
    return PortfolioWeights(c1 / total, estimator_id, params)
