"""GMVP weights from the five compared covariance/precision estimators.

``scme``  inverse sample covariance
``shre``  Ledoit-Wolf (2004) linear shrinkage toward a scaled identity
``wshre`` eigenvalue-weighted shrinkage toward the grand mean
``sce``   spectrally corrected spiked covariance
``scre``  spectrally corrected and regularized spiked covariance
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegeneratePrecisionError
from .risk_theory import SCE_PARAMS, RegularizationParams, block_gammas
from .sampling import (
    LowRankPrecision,
    ReturnsMatrix,
    _weights_from_c1,
    gmvp_from_precision,
    sample_covariance,
)
from .spectral import SampleSpectrum, SpikeEstimates, eigendecompose_symmetric
from .spiked_model import PortfolioWeights, SpikedCovariance

ESTIMATOR_IDS = ("scme", "shre", "wshre", "sce", "scre")


@dataclass(frozen=True)
class CorrectedSpectrumEstimator:
    """Spike values paired with sample eigenvectors.

    ``sigma2`` only scales the covariance and cancels out of the weights.
    """

    sigma2: float
    indices: np.ndarray
    lambdas: np.ndarray
    vectors: np.ndarray

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices, dtype=int).ravel()
        lam = np.asarray(self.lambdas, dtype=float).ravel()
        U = np.asarray(self.vectors, dtype=float)
        if U.ndim != 2 or U.shape[1] != lam.shape[0] or idx.shape != lam.shape:
            raise ConfigError("vectors must be M x r with one column per spike")
        if lam.size and np.max(np.abs(U.T @ U - np.eye(lam.size))) > 1e-8:
            raise ConfigError("spike eigenvectors must be orthonormal")
        if np.any(1.0 + lam <= 0):
            raise ConfigError("every spike needs 1 + lambda > 0")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "vectors", U)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @classmethod
    def from_oracle(cls, model: SpikedCovariance, spectrum: SampleSpectrum) -> CorrectedSpectrumEstimator:
        """True spike values with the matching sample eigenvectors."""
        U = spectrum.spiked_vectors(model.r1, model.r2)
        return cls(model.sigma2, model.indices, model.lambdas, U)

    @classmethod
    def from_estimates(cls, est: SpikeEstimates) -> CorrectedSpectrumEstimator:
        return cls(est.sigma2_hat, est.indices, est.lambda_hat, est.vectors)

    def precision(self, params: RegularizationParams) -> LowRankPrecision:
        """The regularized inverse, I - sum_j gamma_{i,j} u_j u_j'."""
        gij = block_gammas(self.indices, self.lambdas, params)
        return LowRankPrecision(self.vectors, gij)

    def dense_covariance(self, params: RegularizationParams = SCE_PARAMS) -> np.ndarray:
        mult = np.where(self.indices > 0, params.gamma1, params.gamma2) * self.lambdas
        return np.eye(self.dim) + (self.vectors * mult) @ self.vectors.T


def _as_array(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("expected a square covariance matrix")
    return S


def weights_scme(S: np.ndarray) -> PortfolioWeights:
    S = _as_array(S)
    ones = np.ones(S.shape[0])
    if np.linalg.cond(S) > 1e13:
        raise DegeneratePrecisionError("sample covariance is numerically singular")
    try:
        c1 = np.linalg.solve(S, ones)
    except np.linalg.LinAlgError as exc:
        raise DegeneratePrecisionError("sample covariance is singular") from exc
    return _weights_from_c1(c1, "scme")


def weights_scre(est: CorrectedSpectrumEstimator, params: RegularizationParams) -> PortfolioWeights:
    g = np.where(est.indices > 0, params.gamma1, params.gamma2)
    if np.any(1.0 + g * est.lambdas <= 0):
        raise DegeneratePrecisionError("1 + gamma * lambda must stay positive for every spike")
    return gmvp_from_precision(est.precision(params), "scre", params.as_tuple())


def weights_sce(est: CorrectedSpectrumEstimator) -> PortfolioWeights:
    w = weights_scre(est, SCE_PARAMS)
    return PortfolioWeights(w.weights, "sce")


def ledoit_wolf_shrinkage(returns: ReturnsMatrix | np.ndarray) -> tuple[float, float]:
    """Shrinkage intensity and target scale ``(rho, m)`` for the 2004 estimator.

    The panel is demeaned and the 1/n covariance feeds the plug-in
    estimates of the dispersion ``d^2`` and the estimation error ``b^2``.
    """
    y = returns.data if isinstance(returns, ReturnsMatrix) else np.asarray(returns, dtype=float)
    n, M = y.shape
    if n < 2:
        raise ValueError("need n >= 2")
    x = y - y.mean(axis=0)
    S = x.T @ x / n
    m = np.trace(S) / M
    d2 = np.sum((S - m * np.eye(M)) ** 2) / M
    if d2 == 0.0:
        return 0.0, float(m)
    row_norms = np.sum(x**2, axis=1)
    b2_bar = (np.sum(row_norms**2) - n * np.sum(S**2)) / (n * n * M)
    b2 = min(max(b2_bar, 0.0), d2)
    return float(b2 / d2), float(m)


def shrunk_covariance(returns: ReturnsMatrix | np.ndarray) -> tuple[np.ndarray, float]:
    """``rho * m * I + (1 - rho) * S`` with S the 1/(n-1) sample covariance."""
    S = sample_covariance(returns)
    rho, _ = ledoit_wolf_shrinkage(returns)
    m = np.trace(S) / S.shape[0]
    return rho * m * np.eye(S.shape[0]) + (1.0 - rho) * S, rho


def weights_shre(returns: ReturnsMatrix | np.ndarray) -> PortfolioWeights:
    sigma, rho = shrunk_covariance(returns)
    if rho == 0.0:
        return PortfolioWeights(weights_scme(sigma).weights, "shre")
    c1 = np.linalg.solve(sigma, np.ones(sigma.shape[0]))
    return _weights_from_c1(c1, "shre")


def wshre_eigenvalues(s: np.ndarray, n: int, c: float = 1.0) -> np.ndarray:
    """Pull each eigenvalue toward the grand mean with weight n / (n + c s_j / mean)."""
    s = np.asarray(s, dtype=float)
    mean = float(np.mean(s))
    if mean <= 0:
        raise DegeneratePrecisionError("eigenvalues have a non-positive mean")
    w = n / (n + c * s / mean)
    return w * s + (1.0 - w) * mean


def weights_wshre(S: np.ndarray, n: int, c: float = 1.0) -> PortfolioWeights:
    S = _as_array(S)
    vals, vecs = eigendecompose_symmetric(S)
    shrunk = wshre_eigenvalues(vals, n, c)
    c1 = vecs @ ((vecs.T @ np.ones(S.shape[0])) / shrunk)
    return _weights_from_c1(c1, "wshre")
