"""Deterministic equivalents of the regularized GMVP risk and their optimisation.

Every quantity here is expressed in sigma2-normalised units; only
``asymptotic_risk`` multiplies back by sigma2.  Sums over spikes are split
by block: positive spikes use the first regularization parameter and
negative spikes the second.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO

import numpy as np

from .errors import ConfigError
from .spectral import overlap_coefficient
from .spiked_model import covariance_times


@dataclass(frozen=True)
class RegularizationParams:
    gamma1: float
    gamma2: float
    phi1: float | None = None
    phi2: float | None = None

    def __post_init__(self) -> None:
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ConfigError("regularization parameters must be >= 0")

    def as_tuple(self) -> tuple[float, float]:
        return (self.gamma1, self.gamma2)


SCE_PARAMS = RegularizationParams(1.0, 1.0)


@dataclass(frozen=True)
class AsymptoticInputs:
    indices: np.ndarray
    lambdas: np.ndarray
    b: np.ndarray
    J: float
    sigma2: float = 1.0

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices, dtype=int).ravel()
        lam = np.asarray(self.lambdas, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        if not (idx.shape == lam.shape == b.shape):
            raise ConfigError("indices, lambdas and b must have equal length")
        if not 0.0 < self.J < 1.0:
            raise ConfigError(f"J = {self.J} must lie in (0, 1)")
        if np.any(b < 0) or np.any(b > 1 + 1e-12) or b.sum() > 1 + 1e-9:
            raise ConfigError("b coefficients must lie in [0, 1] and sum to at most 1")
        if np.any(lam[idx > 0] <= 0) or np.any((lam[idx < 0] >= 0) | (lam[idx < 0] <= -1)):
            raise ConfigError("spike values violate the sign constraints of their block")
        for name, v in (("indices", idx), ("lambdas", lam), ("b", b)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def from_model(cls, model, J: float) -> AsymptoticInputs:
        return cls(model.indices, model.lambdas, model.b_coefficients(), J, model.sigma2)

    @classmethod
    def from_estimates(cls, est) -> AsymptoticInputs:
        b = np.clip(est.b_hat, 0.0, 1.0)
        if b.sum() > 1.0:
            b = b / b.sum()
        return cls(est.indices, est.lambda_hat, b, est.J, est.sigma2_hat)

    @property
    def a(self) -> np.ndarray:
        return np.array([a_coeff(l, self.J) for l in self.lambdas])

    @property
    def lambda1(self) -> float | None:
        pos = self.lambdas[self.indices == 1]
        return float(pos[0]) if pos.size else None

    @property
    def lambda_minus1(self) -> float | None:
        neg = self.lambdas[self.indices == -1]
        return float(neg[0]) if neg.size else None


def a_coeff(lam: float, J: float) -> float:
    return overlap_coefficient(lam, J)


def gamma_block(gamma_i: float, lam: float) -> float:
    """Mobius map gamma * lambda / (1 + gamma * lambda)."""
    gl = gamma_i * lam
    if 1.0 + gl == 0.0:
        raise ZeroDivisionError("pole at 1 + gamma * lambda = 0")
    return gl / (1.0 + gl)


def block_gammas(indices: np.ndarray, lambdas: np.ndarray, params: RegularizationParams) -> np.ndarray:
    """gamma_{i,j} for each spike, with i chosen by the spike's block."""
    g = np.where(np.asarray(indices) > 0, params.gamma1, params.gamma2)
    return np.array([gamma_block(gi, l) for gi, l in zip(g, lambdas)], dtype=float)


def _x_y(lam, a, b, gij):
    # gij has shape (..., r); the spike axis is last
    ab = a * b
    x = 1.0 - np.sum(ab * gij, axis=-1)
    y = (
        1.0
        + np.sum(lam * b)
        - 2.0 * np.sum((lam + 1.0) * ab * gij, axis=-1)
        + np.sum(ab * (lam * a + 1.0) * gij**2, axis=-1)
    )
    return x, y


def xbar(inputs: AsymptoticInputs, params: RegularizationParams) -> float:
    gij = block_gammas(inputs.indices, inputs.lambdas, params)
    return float(_x_y(inputs.lambdas, inputs.a, inputs.b, gij)[0])


def ybar(inputs: AsymptoticInputs, params: RegularizationParams) -> float:
    gij = block_gammas(inputs.indices, inputs.lambdas, params)
    return float(_x_y(inputs.lambdas, inputs.a, inputs.b, gij)[1])


def asymptotic_risk(inputs: AsymptoticInputs, params: RegularizationParams) -> float:
    """Deterministic equivalent of M times the portfolio variance."""
    gij = block_gammas(inputs.indices, inputs.lambdas, params)
    x, y = _x_y(inputs.lambdas, inputs.a, inputs.b, gij)
    if x == 0.0:
        raise ZeroDivisionError("X-bar vanishes")
    return float(inputs.sigma2 * y / x**2)


def empirical_x_y(precision, model) -> tuple[float, float]:
    """Finite-sample ``1'C1/M`` and ``1'C Sigma C 1/(M sigma2)`` for a precision ``C``."""
    ones = np.ones(model.dim)
    c1 = precision.apply(ones)
    x = float(ones @ c1) / model.dim
    y = float(c1 @ covariance_times(model, c1)) / (model.dim * model.sigma2)
    return x, y


def phi_to_gamma(
    phi1: float,
    phi2: float,
    lambda1: float | None,
    lambda_minus1: float | None,
) -> RegularizationParams:
    """Map (phi1, phi2) in [0, 1)^2 to (gamma1, gamma2).

    A missing block (no spike of that sign) gets gamma = 0.
    """
    for phi in (phi1, phi2):
        if phi == 1.0:
            raise ZeroDivisionError("pole at phi = 1")
        if not 0.0 <= phi < 1.0:
            raise ConfigError(f"phi = {phi} outside [0, 1)")
    g1 = 0.0 if lambda1 is None else phi1 / ((1.0 - phi1) * lambda1)
    g2 = 0.0 if lambda_minus1 is None else -phi2 / ((1.0 - phi2) * lambda_minus1)
    return RegularizationParams(g1, g2, phi1, phi2)


def phi_block_gammas(
    phi1: np.ndarray,
    phi2: np.ndarray,
    inputs: AsymptoticInputs,
) -> tuple[np.ndarray, np.ndarray]:
    """gamma_{i,j} written directly in phi, broadcast over phi arrays.

    Returns ``(gij, feasible)`` with the spike axis last; ``feasible`` is
    False where some 1 + gamma_i * lambda_j <= 0.
    """
    phi1 = np.asarray(phi1, dtype=float)[..., None]
    phi2 = np.asarray(phi2, dtype=float)[..., None]
    lam = inputs.lambdas
    pos = inputs.indices > 0
    l1 = inputs.lambda1 if inputs.lambda1 is not None else 1.0
    lm1 = inputs.lambda_minus1 if inputs.lambda_minus1 is not None else -1.0
    base1 = (1.0 - phi1) * l1
    base2 = (1.0 - phi2) * lm1
    den = np.where(pos, base1 + phi1 * lam, base2 - phi2 * lam)
    num = np.where(pos, phi1 * lam, -phi2 * lam)
    # 1 + gamma_i lambda_j = den / base_i
    feasible = np.all(den / np.where(pos, base1, base2) > 0, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        gij = num / den
    return gij, feasible


def grid_values(inputs: AsymptoticInputs, phi1: np.ndarray, phi2: np.ndarray) -> np.ndarray:
    """g(phi1, phi2) = Y-bar / X-bar^2 on the outer grid phi1 x phi2.

    Infeasible points (a pole or an indefinite regularized matrix) are +inf.
    """
    P1, P2 = np.meshgrid(np.asarray(phi1, float), np.asarray(phi2, float), indexing="ij")
    gij, feasible = phi_block_gammas(P1, P2, inputs)
    with np.errstate(divide="ignore", invalid="ignore"):
        x, y = _x_y(inputs.lambdas, inputs.a, inputs.b, gij)
        g = y / x**2
    g = np.where(feasible & np.isfinite(g) & (x != 0.0), g, np.inf)
    return g


@dataclass(frozen=True)
class GridResult:
    phi1: float
    phi2: float
    gamma1: float
    gamma2: float
    gbar: float

    @property
    def params(self) -> RegularizationParams:
        return RegularizationParams(self.gamma1, self.gamma2, self.phi1, self.phi2)


def _argmin_lex(g: np.ndarray, phi1: np.ndarray, phi2: np.ndarray) -> tuple[float, float, float]:
    # C-order argmin returns the first minimum: smallest phi1, then phi2
    k = int(np.argmin(g))
    i, j = np.unravel_index(k, g.shape)
    return float(phi1[i]), float(phi2[j]), float(g[i, j])


def grid_search(inputs: AsymptoticInputs, resolution: int = 100, refine: int = 10) -> GridResult:
    """Minimise g over the uniform grid {0, 1/k, ..., (k-1)/k}^2.

    With ``refine > 1`` a second grid of spacing 1/(k*refine) is scanned
    over the neighbouring coarse cells of the coarse argmin; the refined
    point is kept only if it is strictly better.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    grid = np.arange(resolution) / resolution
    g = grid_values(inputs, grid, grid)
    if not np.any(np.isfinite(g)):
        raise ArithmeticError("every grid point is infeasible")
    p1, p2, best = _argmin_lex(g, grid, grid)
    if refine > 1:
        step = 1.0 / (resolution * refine)
        fine = []
        for centre in (p1, p2):
            lo = max(0.0, centre - 1.0 / resolution)
            hi = min(1.0 - step, centre + 1.0 / resolution)
            count = int(round((hi - lo) / step)) + 1
            fine.append(lo + step * np.arange(count))
        gf = grid_values(inputs, fine[0], fine[1])
        f1, f2, fbest = _argmin_lex(gf, fine[0], fine[1])
        if fbest < best:
            p1, p2, best = f1, f2, fbest
    params = phi_to_gamma(p1, p2, inputs.lambda1, inputs.lambda_minus1)
    return GridResult(p1, p2, params.gamma1, params.gamma2, best * inputs.sigma2)


def write_grid_scan(
    inputs: AsymptoticInputs,
    resolution: int,
    handle: IO[str],
) -> None:
    """Dump the coarse objective surface as ``phi1,phi2,gbar`` rows."""
    grid = np.arange(resolution) / resolution
    g = grid_values(inputs, grid, grid) * inputs.sigma2
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(["phi1", "phi2", "gbar"])
    for i, p1 in enumerate(grid):
        for j, p2 in enumerate(grid):
            writer.writerow([repr(float(p1)), repr(float(p2)), format_float(g[i, j])])


def format_float(x: float) -> str:
    if np.isinf(x):
        return "inf"
    return format(float(x), ".17g")

