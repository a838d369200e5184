from __future__ import annotations

import numpy as np
import pytest

from scrgmvp.spiked_model import SpikedCovariance, SpikeSpec


def random_model(rng: np.random.Generator, dim: int, r1: int, r2: int, sigma2: float = 1.0) -> SpikedCovariance:
    """Spiked model with Haar-random orthonormal spike vectors."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, r1 + r2)))
    pos = np.sort(rng.uniform(0.1, 30.0, size=r1))[::-1]
    neg = np.sort(rng.uniform(-0.98, -0.02, size=r2))  # lambda_{-1} most negative
    specs = [SpikeSpec(j + 1, pos[j], q[:, j]) for j in range(r1)]
    specs += [SpikeSpec(-(k + 1), neg[k], q[:, r1 + k]) for k in range(r2)]
    return SpikedCovariance(sigma2, tuple(specs), dim)


def eig_inverse(A: np.ndarray) -> np.ndarray:
    """Generic dense oracle: invert through the eigen-decomposition."""
    vals, vecs = np.linalg.eigh(A)
    return (vecs / vals) @ vecs.T


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240501)
