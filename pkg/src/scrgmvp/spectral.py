"""Sample spectrum, spike detection and consistent spike estimators."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import BulkEigenvalueError, ConfigError

logger = logging.getLogger(__name__)

BHAT_MODES = ("overlap", "verbatim", "one-minus-j")


@dataclass(frozen=True)
class SampleSpectrum:
    """Eigenvalues in descending order with matching eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    J: float

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def spiked_vectors(self, r1: int, r2: int) -> np.ndarray:
        """Columns u_1..u_r1 (largest) then u_-1..u_-r2 (smallest first)."""
        M = self.dim
        top = self.eigenvectors[:, :r1]
        bottom = self.eigenvectors[:, M - 1 : M - 1 - r2 : -1] if r2 else np.zeros((M, 0))
        return np.hstack([top, bottom])

    def spiked_values(self, r1: int, r2: int) -> np.ndarray:
        M = self.dim
        bottom = self.eigenvalues[M - 1 : M - 1 - r2 : -1] if r2 else np.zeros(0)
        return np.concatenate([self.eigenvalues[:r1], bottom])


def eigendecompose_symmetric(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition with values sorted descending.

    Eigenvector signs are fixed so that each column's largest-magnitude
    entry is positive, which makes outputs reproducible across platforms.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-8 * scale:
        raise ValueError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    vals = vals[::-1].copy()
    vecs = vecs[:, ::-1].copy()
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vals, vecs * signs


def sample_spectrum(S: np.ndarray, n: int) -> SampleSpectrum:
    vals, vecs = eigendecompose_symmetric(S)
    J = S.shape[0] / n
    if not 0.0 < J < 1.0:
        raise ConfigError(f"aspect ratio M/n = {J} must lie in (0, 1)")
    return SampleSpectrum(vals, vecs, J)


def forward_spike(lam: float, J: float) -> float:
    """Almost-sure limit of a spiked sample eigenvalue, in units of sigma2."""
    return (1.0 + lam) * (1.0 + J / lam)


def estimate_spike(s: float, sigma2: float, J: float, branch: str = "auto") -> float:
    """Invert the spiked eigenvalue map for one sample eigenvalue.

    ``branch="auto"`` takes the plus root for eigenvalues above the bulk
    (positive spikes) and the minus root below it (negative spikes); those
    are the only roots inside the identifiable region.
    """
    x = s / sigma2
    c = x + 1.0 - J
    disc = c * c - 4.0 * x
    if disc < 0:
        raise BulkEigenvalueError(
            f"eigenvalue {s} lies inside the bulk [{sigma2 * (1 - np.sqrt(J)) ** 2}, "
            f"{sigma2 * (1 + np.sqrt(J)) ** 2}]"
        )
    if branch == "auto":
        branch = "plus" if x > 1.0 else "minus"
    root_plus = (c + np.sqrt(disc)) / 2.0
    if branch == "plus":
        return float(root_plus - 1.0)
    if branch == "minus":
        # product of the roots is x; avoids cancellation for tiny eigenvalues
        return float(x / root_plus - 1.0)
    raise ValueError(f"unknown branch {branch!r}")


def overlap_coefficient(lam: float, J: float) -> float:
    """Limit of (c'u)^2 / (c'v)^2 for a spiked direction."""
    if lam == 0.0 or lam == -J:
        raise ZeroDivisionError("overlap coefficient has a pole at lambda in {0, -J}")
    return (lam * lam - J) / (lam * (lam + J))


def estimate_b(
    lambda_hat: float,
    u: np.ndarray,
    J: float,
    sigma2: float,
    mode: str = "overlap",
) -> float:
    """Estimate b = (1'v / sqrt(M))^2 from a sample eigenvector u.

    ``verbatim`` uses the prefactor (1 + J/l) / (1 - J/l) and denominator
    1 - J*sigma2; ``one-minus-j`` swaps the denominator for 1 - J;
    ``overlap`` divides the sample projection by the overlap coefficient,
    which is the estimator that is consistent for b.
    """
    u = np.asarray(u, dtype=float)
    proj = float(u.sum()) ** 2 / u.shape[0]
    if mode == "overlap":
        a = overlap_coefficient(lambda_hat, J)
        if a == 0.0:
            raise ZeroDivisionError("lambda_hat on the BBP threshold")
        return proj / a
    if lambda_hat == J:
        raise ZeroDivisionError("b-hat prefactor has a pole at lambda_hat = J")
    prefactor = (1.0 + J / lambda_hat) / (1.0 - J / lambda_hat)
    if mode == "verbatim":
        denom = 1.0 - J * sigma2
    elif mode == "one-minus-j":
        denom = 1.0 - J
    else:
        raise ValueError(f"unknown b-hat mode {mode!r}; expected one of {BHAT_MODES}")
    if denom == 0.0:
        raise ZeroDivisionError("b-hat denominator vanishes")
    return prefactor * proj / denom


def estimate_sigma2(spectrum: SampleSpectrum, r1: int, r2: int) -> float:
    """Mean of the bulk eigenvalues once r1 top and r2 bottom are removed."""
    M = spectrum.dim
    if r1 < 0 or r2 < 0 or r1 + r2 >= M:
        raise ConfigError(f"cannot remove {r1}+{r2} spikes from {M} eigenvalues")
    return float(np.mean(spectrum.eigenvalues[r1 : M - r2]))


def detect_spikes(
    spectrum: SampleSpectrum,
    sigma2: float,
    eps: float = 0.05,
    max_r1: int | None = None,
    max_r2: int | None = None,
) -> tuple[int, int]:
    """Count eigenvalues beyond the Marchenko-Pastur edges, widened by eps."""
    rootJ = np.sqrt(spectrum.J)
    upper = sigma2 * (1.0 + rootJ) ** 2 * (1.0 + eps)
    lower = sigma2 * (1.0 - rootJ) ** 2 * (1.0 - eps)
    r1 = int(np.sum(spectrum.eigenvalues > upper))
    r2 = int(np.sum(spectrum.eigenvalues < lower))
    if max_r1 is not None:
        r1 = min(r1, max_r1)
    if max_r2 is not None:
        r2 = min(r2, max_r2)
    # always leave at least one bulk eigenvalue
    while r1 + r2 >= spectrum.dim:
        if r1 >= r2:
            r1 -= 1
        else:
            r2 -= 1
    return r1, r2


@dataclass(frozen=True)
class SpikeEstimates:
    indices: np.ndarray
    lambda_hat: np.ndarray
    b_hat: np.ndarray
    vectors: np.ndarray
    sigma2_hat: float
    J: float

    @property
    def r1(self) -> int:
        return int(np.sum(self.indices > 0))

    @property
    def r2(self) -> int:
        return int(np.sum(self.indices < 0))


def fit_spikes(
    spectrum: SampleSpectrum,
    r1: int | None = None,
    r2: int | None = None,
    sigma2: float | None = None,
    bhat_mode: str = "overlap",
    eps: float = 0.05,
    max_iter: int = 20,
) -> SpikeEstimates:
    """Data-driven spike estimates from a sample spectrum.

    Missing spike counts are detected by alternating between the bulk
    variance estimate and edge counting until the counts stabilise.
    Configured spikes whose eigenvalue falls in the bulk are dropped.
    """
    if r1 is None or r2 is None:
        counts = (0, 0)
        for _ in range(max_iter):
            s2 = sigma2 if sigma2 is not None else estimate_sigma2(spectrum, *counts)
            found = detect_spikes(spectrum, s2, eps=eps)
            found = (found[0] if r1 is None else r1, found[1] if r2 is None else r2)
            if found == counts:
                break
            counts = found
        r1, r2 = counts
    s2 = sigma2 if sigma2 is not None else estimate_sigma2(spectrum, r1, r2)
    J = spectrum.J
    values = spectrum.spiked_values(r1, r2)
    U = spectrum.spiked_vectors(r1, r2)
    labels = list(range(1, r1 + 1)) + list(range(-1, -r2 - 1, -1))
    keep, lam_hat, b_hat = [], [], []
    for col, (label, s) in enumerate(zip(labels, values)):
        try:
            lam = estimate_spike(s, s2, J, branch="plus" if label > 0 else "minus")
        except BulkEigenvalueError:
            logger.info("dropping spike %d: eigenvalue %.6g is inside the bulk", label, s)
            continue
        if abs(abs(lam) - np.sqrt(J)) < 1e-12:
            logger.info("dropping spike %d: on the BBP threshold", label)
            continue
        keep.append(col)
        lam_hat.append(lam)
        b_hat.append(max(0.0, estimate_b(lam, U[:, col], J, s2, mode=bhat_mode)))
    # relabel so indices stay contiguous after drops
    new_pos = [i + 1 for i, c in enumerate(c for c in keep if labels[c] > 0)]
    new_neg = [-(i + 1) for i, c in enumerate(c for c in keep if labels[c] < 0)]
    return SpikeEstimates(
        indices=np.array(new_pos + new_neg, dtype=int),
        lambda_hat=np.array(lam_hat, dtype=float),
        b_hat=np.array(b_hat, dtype=float),
        vectors=U[:, keep],
        sigma2_hat=float(s2),
        J=J,
    )
