"""Spiked population covariance and its closed-form oracle quantities.

The population model is

    Sigma = sigma2 * (I_M + sum_j lambda_j v_j v_j')

with a handful of positive spikes (indices 1..r1) and negative spikes
(indices -1..-r2, each in (-1, 0)).  Everything needed downstream is a
rank-r expression in the spike vectors, so dense M x M matrices are only
built by the ``dense_*`` helpers used as oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError

_UNIT_TOL = 1e-12
_ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class SpikeSpec:
    index: int
    lam: float
    vector: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.vector, dtype=float).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)
        object.__setattr__(self, "lam", float(self.lam))
        if self.index == 0:
            raise ConfigError("spike index 0 is not allowed")
        if self.index > 0 and not self.lam > 0:
            raise ConfigError(f"positive spike {self.index} needs lambda > 0, got {self.lam}")
        if self.index < 0 and not -1.0 < self.lam < 0.0:
            raise ConfigError(
                f"negative spike {self.index} needs -1 < lambda < 0, got {self.lam}"
            )
        if abs(np.linalg.norm(v) - 1.0) > _UNIT_TOL:
            raise ConfigError(f"spike {self.index} vector is not unit norm")


@dataclass(frozen=True)
class SpikedCovariance:
    sigma2: float
    spikes: tuple[SpikeSpec, ...]
    dim: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "sigma2", float(self.sigma2))
        if not self.sigma2 > 0:
            raise ConfigError("sigma2 must be positive")
        if self.dim < 1:
            raise ConfigError("dimension must be >= 1")
        pos = sorted((s for s in self.spikes if s.index > 0), key=lambda s: s.index)
        neg = sorted((s for s in self.spikes if s.index < 0), key=lambda s: -s.index)
        if [s.index for s in pos] != list(range(1, len(pos) + 1)):
            raise ConfigError("positive spike indices must be 1..r1")
        if [s.index for s in neg] != list(range(-1, -len(neg) - 1, -1)):
            raise ConfigError("negative spike indices must be -1..-r2")
        for a, b in zip(pos, pos[1:]):
            if not a.lam > b.lam:
                raise ConfigError("positive spikes must be strictly decreasing")
        # lambda_{-1} is the most negative spike
        for a, b in zip(neg, neg[1:]):
            if not a.lam < b.lam:
                raise ConfigError("negative spikes must satisfy lambda_{-1} < lambda_{-2} < ... < 0")
        ordered = tuple(pos + neg)
        if len(ordered) >= self.dim:
            raise ConfigError("need fewer spikes than dimensions")
        for s in ordered:
            if s.vector.shape != (self.dim,):
                raise ConfigError(f"spike {s.index} vector has wrong length")
        if ordered:
            V = np.column_stack([s.vector for s in ordered])
            if np.max(np.abs(V.T @ V - np.eye(len(ordered)))) > _ORTHO_TOL:
                raise ConfigError("spike vectors must be orthonormal")
        object.__setattr__(self, "spikes", ordered)

    @property
    def r1(self) -> int:
        return sum(1 for s in self.spikes if s.index > 0)

    @property
    def r2(self) -> int:
        return sum(1 for s in self.spikes if s.index < 0)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([s.lam for s in self.spikes], dtype=float)

    @property
    def indices(self) -> np.ndarray:
        return np.array([s.index for s in self.spikes], dtype=int)

    @property
    def vectors(self) -> np.ndarray:
        """Spike vectors as columns of an M x r matrix."""
        if not self.spikes:
            return np.zeros((self.dim, 0))
        return np.column_stack([s.vector for s in self.spikes])

    def b_coefficients(self) -> np.ndarray:
        """Squared projections (1'v_j / sqrt(M))^2 of the normalized ones vector."""
        proj = self.vectors.sum(axis=0) / np.sqrt(self.dim)
        return proj**2

    def scaled(self, c: float) -> SpikedCovariance:
        return SpikedCovariance(self.sigma2 * c, self.spikes, self.dim)


def canonical_model(
    dim: int,
    spikes: Sequence[tuple[int, float]],
    sigma2: float = 1.0,
) -> SpikedCovariance:
    """Build a model whose spike vectors are canonical basis vectors.

    Positive index ``j`` maps to ``e_j``; negative index ``-k`` maps to
    ``e_{M-k+1}`` so that ``-1`` is the last coordinate.
    """
    specs = []
    for index, lam in spikes:
        if index > 0:
            pos = index - 1
        elif index < 0:
            pos = dim + index
        else:
            raise ConfigError("spike index 0 is not allowed")
        if not 0 <= pos < dim:
            raise ConfigError(f"spike index {index} out of range for dim {dim}")
        v = np.zeros(dim)
        v[pos] = 1.0
        specs.append(SpikeSpec(index, lam, v))
    return SpikedCovariance(sigma2, tuple(specs), dim)


REFERENCE_SPIKES: tuple[tuple[int, float], ...] = ((1, 20.0), (2, 10.0), (3, 5.0), (-1, -0.99))


def reference_model(dim: int = 50, sigma2: float = 1.0) -> SpikedCovariance:
    """Three positive spikes (20, 10, 5), smallest eigenvalue 0.01, canonical vectors."""
    return canonical_model(dim, REFERENCE_SPIKES, sigma2)


@dataclass(frozen=True)
class PortfolioWeights:
    weights: np.ndarray
    estimator_id: str = ""
    params: tuple[float, float] | None = field(default=None)

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float).ravel()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        scale = max(1.0, float(np.abs(w).sum()))
        if abs(w.sum() - 1.0) > 1e-10 * scale:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")

    def __len__(self) -> int:
        return self.weights.shape[0]


def _rank_r(model: SpikedCovariance, coeffs: np.ndarray) -> np.ndarray:
    V = model.vectors
    return np.eye(model.dim) + (V * coeffs) @ V.T


def dense_covariance(model: SpikedCovariance) -> np.ndarray:
    return model.sigma2 * _rank_r(model, model.lambdas)


def dense_sqrt(model: SpikedCovariance) -> np.ndarray:
    return np.sqrt(model.sigma2) * _rank_r(model, np.sqrt(1.0 + model.lambdas) - 1.0)


def dense_inverse(model: SpikedCovariance) -> np.ndarray:
    lam = model.lambdas
    return _rank_r(model, -lam / (1.0 + lam)) / model.sigma2


def precision_times(model: SpikedCovariance, x: np.ndarray) -> np.ndarray:
    """Sigma^{-1} x in O(M r) without forming a matrix."""
    lam = model.lambdas
    V = model.vectors
    return (x - V @ ((lam / (1.0 + lam)) * (V.T @ x))) / model.sigma2


def covariance_times(model: SpikedCovariance, x: np.ndarray) -> np.ndarray:
    V = model.vectors
    return model.sigma2 * (x + V @ (model.lambdas * (V.T @ x)))


def oracle_gmvp(model: SpikedCovariance) -> PortfolioWeights:
    c1 = precision_times(model, np.ones(model.dim))
    return PortfolioWeights(c1 / c1.sum(), "oracle")


def portfolio_risk(w: PortfolioWeights | np.ndarray, model: SpikedCovariance) -> float:
    """True variance w' Sigma w of a portfolio under the population model."""
    x = w.weights if isinstance(w, PortfolioWeights) else np.asarray(w, dtype=float)
    if x.shape != (model.dim,):
        raise ValueError(f"weight length {x.shape} does not match dimension {model.dim}")
    return float(x @ covariance_times(model, x))


def oracle_risk(model: SpikedCovariance) -> float:
    """Minimum attainable variance 1 / (1' Sigma^{-1} 1)."""
    return 1.0 / float(precision_times(model, np.ones(model.dim)).sum())
