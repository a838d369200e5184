import numpy as np
import pytest

from scrgmvp.errors import BulkEigenvalueError, ConfigError
from scrgmvp.sampling import child_seed, generate_returns, sample_covariance
from scrgmvp.spectral import (
    SampleSpectrum,
    detect_spikes,
    eigendecompose_symmetric,
    estimate_b,
    estimate_sigma2,
    estimate_spike,
    fit_spikes,
    forward_spike,
    sample_spectrum,
)
from scrgmvp.spiked_model import canonical_model, reference_model


def _spectrum(S, J=0.5):
    vals, vecs = eigendecompose_symmetric(S)
    return SampleSpectrum(vals, vecs, J)


def test_eigendecompose_examples(rng):
    vals, vecs = eigendecompose_symmetric(np.diag([1.0, 3.0]))
    np.testing.assert_allclose(vals, [3.0, 1.0])
    np.testing.assert_allclose(np.abs(vecs), [[0, 1], [1, 0]], atol=1e-15)
    vals, _ = eigendecompose_symmetric(np.array([[0.5, -0.5], [-0.5, 0.5]]))
    np.testing.assert_allclose(vals, [1.0, 0.0], atol=1e-15)
    A = rng.standard_normal((30, 12))
    S = A.T @ A / 30
    vals, vecs = eigendecompose_symmetric(S)
    assert np.all(np.diff(vals) <= 0)
    assert np.max(np.abs((vecs * vals) @ vecs.T - S)) < 1e-8
    assert np.max(np.abs(vecs.T @ vecs - np.eye(12))) < 1e-10
    with pytest.raises(ValueError):
        eigendecompose_symmetric(np.array([[1.0, 0.2], [0.0, 1.0]]))


def test_estimate_spike_examples():
    assert estimate_spike(21.0, 1.0, 0.0) == pytest.approx(20.0, abs=1e-12)
    assert estimate_spike(21.2625, 1.0, 0.25) == pytest.approx(20.0, abs=1e-12)
    assert estimate_spike(2 * 21.2625, 2.0, 0.25) == estimate_spike(21.2625, 1.0, 0.25)
    with pytest.raises(BulkEigenvalueError):
        estimate_spike(1.0, 1.0, 0.25)


@pytest.mark.parametrize("J", [0.1, 0.25, 0.5, 0.9])
def test_round_trip_through_forward_map(J):
    for lam in (np.sqrt(J) + 0.01, 1.0, 5.0, 20.0):
        s = forward_spike(lam, J)
        assert abs(estimate_spike(s, 1.0, J) - lam) < 1e-10
        assert abs(estimate_spike(3.0 * s, 3.0, J) - lam) < 1e-10
    for lam in (-0.99, -0.5 * (1.0 + np.sqrt(J))):
        if not -1 < lam < -np.sqrt(J):
            continue
        s = forward_spike(lam, J)
        lam_hat = estimate_spike(s, 1.0, J)
        assert abs(lam_hat - lam) < 1e-10
        # both roots reproduce s; only one sits in the identifiable region
        other = estimate_spike(s, 1.0, J, branch="plus")
        assert abs(forward_spike(other, J) - s) < 1e-8
        assert not -1 < other < -np.sqrt(J)


def test_estimate_b_examples(rng):
    u = rng.standard_normal(40)
    u /= np.linalg.norm(u)
    proj = u.sum() ** 2 / 40
    for mode in ("overlap", "verbatim", "one-minus-j"):
        assert estimate_b(5.0, u, 0.0, 1.0, mode) == pytest.approx(proj, rel=1e-12)
        assert estimate_b(5.0, np.ones(40) / np.sqrt(40), 0.0, 1.0, mode) == pytest.approx(1.0, rel=1e-12)
    lam, J, s2 = 20.0, 0.5, 0.8
    verbatim = (1 + J / lam) / (1 - J / lam) * proj / (1 - J * s2)
    assert estimate_b(lam, u, J, s2, "verbatim") == pytest.approx(verbatim, rel=1e-14)
    assert estimate_b(lam, u, J, s2, "one-minus-j") == pytest.approx(verbatim * (1 - J * s2) / (1 - J), rel=1e-14)
    a = (lam**2 - J) / (lam * (lam + J))
    assert estimate_b(lam, u, J, s2, "overlap") == pytest.approx(proj / a, rel=1e-14)
    with pytest.raises(ZeroDivisionError):
        estimate_b(lam, u, 0.5, 2.0, "verbatim")
    with pytest.raises(ZeroDivisionError):
        estimate_b(np.sqrt(0.25), u, 0.25, 1.0, "overlap")


def test_estimate_sigma2():
    assert estimate_sigma2(_spectrum(np.eye(5)), 1, 1) == pytest.approx(1.0)
    assert estimate_sigma2(_spectrum(2 * np.eye(5)), 0, 0) == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        estimate_sigma2(_spectrum(np.eye(3)), 2, 1)


def test_estimate_sigma2_monte_carlo():
    model = reference_model(100)
    est = []
    for rep in range(100):
        y = generate_returns(model, np.zeros(100), 200, child_seed(5, rep))
        est.append(estimate_sigma2(sample_spectrum(sample_covariance(y), 200), 3, 1))
    assert abs(np.mean(est) - 1.0) < 0.1


def test_detect_spikes_deterministic():
    S = np.diag([50.0] + [1.0] * 9)
    assert detect_spikes(_spectrum(S, J=0.1), 1.0) == (1, 0)
    assert detect_spikes(_spectrum(S, J=0.1), 1.0, max_r1=0) == (0, 0)


def test_detect_spikes_monte_carlo():
    null = canonical_model(100, [])
    model = reference_model(100)
    null_hits = spiked_hits = 0
    for rep in range(200):
        y = generate_returns(null, np.zeros(100), 400, child_seed(1, rep))
        null_hits += detect_spikes(sample_spectrum(sample_covariance(y), 400), 1.0) == (0, 0)
        y = generate_returns(model, np.zeros(100), 400, child_seed(2, rep))
        spiked_hits += detect_spikes(sample_spectrum(sample_covariance(y), 400), 1.0) == (3, 1)
    assert null_hits >= 0.95 * 200
    assert spiked_hits >= 0.90 * 200


def test_fit_spikes_detects_and_estimates():
    model = reference_model(100)
    y = generate_returns(model, np.zeros(100), 400, 17)
    spectrum = sample_spectrum(sample_covariance(y), 400)
    est = fit_spikes(spectrum)
    assert (est.r1, est.r2) == (3, 1)
    np.testing.assert_array_equal(est.indices, [1, 2, 3, -1])
    np.testing.assert_allclose(est.lambda_hat, model.lambdas, rtol=0.35)
    assert np.all(est.lambda_hat[:3] > np.sqrt(spectrum.J))
    assert -1 < est.lambda_hat[3] < -np.sqrt(spectrum.J)
    assert np.all(est.b_hat >= 0)


def test_fit_spikes_drops_bulk_eigenvalues():
    model = canonical_model(100, [(1, 20.0)])
    y = generate_returns(model, np.zeros(100), 400, 3)
    est = fit_spikes(sample_spectrum(sample_covariance(y), 400), 3, 1)
    assert est.r1 == 1 and est.r2 == 0
    np.testing.assert_array_equal(est.indices, [1])
