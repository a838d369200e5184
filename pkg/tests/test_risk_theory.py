import io

import numpy as np
import pytest

from scrgmvp.errors import ConfigError
from scrgmvp.estimators import CorrectedSpectrumEstimator
from scrgmvp.risk_theory import (
    SCE_PARAMS,
    AsymptoticInputs,
    RegularizationParams,
    a_coeff,
    asymptotic_risk,
    block_gammas,
    empirical_x_y,
    gamma_block,
    grid_search,
    grid_values,
    phi_block_gammas,
    phi_to_gamma,
    write_grid_scan,
    xbar,
    ybar,
)
from scrgmvp.sampling import generate_returns, sample_covariance
from scrgmvp.spectral import sample_spectrum
from scrgmvp.spiked_model import reference_model

SINGLE = AsymptoticInputs([1], [20.0], [0.02], 0.5)


def _random_inputs(rng, r1, r2, J=None):
    pos = np.sort(rng.uniform(1.0, 30.0, r1))[::-1]
    neg = np.sort(rng.uniform(-0.99, -0.5, r2))
    b = rng.dirichlet(np.ones(r1 + r2 + 1))[:-1]
    idx = list(range(1, r1 + 1)) + [-(k + 1) for k in range(r2)]
    return AsymptoticInputs(idx, np.concatenate([pos, neg]), b, J or rng.uniform(0.05, 0.25))


def test_a_coeff_examples():
    assert a_coeff(np.sqrt(0.3), 0.3) == pytest.approx(0.0, abs=1e-15)
    assert a_coeff(7.0, 0.0) == 1.0
    assert a_coeff(20.0, 0.5) == pytest.approx(399.5 / 410, rel=1e-15)
    for J in (0.5, 0.1, 1e-3, 1e-6):
        assert 0.0 < a_coeff(3.0, J) < 1.0
    assert a_coeff(3.0, 1e-9) == pytest.approx(1.0, abs=1e-8)
    for bad in (0.0, -0.5):
        with pytest.raises(ZeroDivisionError):
            a_coeff(bad, 0.5)


def test_gamma_block_examples():
    assert gamma_block(0.0, 5.0) == 0.0
    assert gamma_block(1.0, 1.0) == 0.5
    vals = [gamma_block(g, 3.0) for g in (1, 10, 100, 1e4)]
    assert all(a < b < 1 for a, b in zip(vals, vals[1:]))
    with pytest.raises(ZeroDivisionError):
        gamma_block(2.0, -0.5)


def test_xbar_ybar_examples():
    empty = AsymptoticInputs([], [], [], 0.5)
    assert xbar(empty, SCE_PARAMS) == 1.0
    assert ybar(empty, SCE_PARAMS) == 1.0
    assert asymptotic_risk(empty, SCE_PARAMS) == 1.0
    model_inputs = AsymptoticInputs.from_model(reference_model(50), 0.5)
    zero = RegularizationParams(0.0, 0.0)
    assert xbar(model_inputs, zero) == 1.0
    assert ybar(model_inputs, zero) == pytest.approx(1 + np.sum(model_inputs.lambdas * model_inputs.b))
    a = 399.5 / 410
    assert xbar(SINGLE, SCE_PARAMS) == pytest.approx(1 - a * 0.02 * 20 / 21, rel=1e-14)
    assert xbar(SINGLE, SCE_PARAMS) == pytest.approx(0.981440186, abs=1e-9)


def test_double_sum_matches_block_sum(rng):
    for _ in range(50):
        inp = _random_inputs(rng, int(rng.integers(0, 4)), int(rng.integers(0, 3)))
        params = RegularizationParams(*rng.uniform(0, 2, 2))
        lam, a, b = inp.lambdas, inp.a, inp.b
        gam = np.array([params.gamma1, params.gamma2])[:, None]
        G = gam * lam / (1 + gam * lam)  # gamma_{i,j} for both i
        delta = np.vstack([inp.indices > 0, inp.indices < 0]).astype(float)
        x = 1 - np.sum(a * b * G * delta)
        y = (1 + np.sum(lam * b * delta) - 2 * np.sum((lam + 1) * a * b * G * delta)
             + np.sum(a * b * (lam * a + 1) * G**2 * delta))
        assert xbar(inp, params) == pytest.approx(x, rel=1e-13, abs=1e-14)
        assert ybar(inp, params) == pytest.approx(y, rel=1e-13, abs=1e-14)


def test_phi_to_gamma_examples():
    assert phi_to_gamma(0.0, 0.0, 20.0, -0.99).as_tuple() == (0.0, 0.0)
    p = phi_to_gamma(0.5, 0.0, 20.0, -0.99)
    assert p.gamma1 == pytest.approx(0.05, rel=1e-15)
    assert gamma_block(p.gamma1, 20.0) == pytest.approx(0.5, rel=1e-15)
    assert phi_to_gamma(0.0, 0.5, 20.0, -0.99).gamma2 == pytest.approx(1 / 0.99, rel=1e-15)
    assert phi_to_gamma(0.3, 0.4, None, None).as_tuple() == (0.0, 0.0)
    with pytest.raises(ZeroDivisionError):
        phi_to_gamma(1.0, 0.0, 20.0, -0.99)
    with pytest.raises(ConfigError):
        phi_to_gamma(-0.1, 0.0, 20.0, -0.99)


def test_phi_block_forms_match_mobius_map(rng):
    for _ in range(50):
        inp = _random_inputs(rng, 3, 2)
        phi1, phi2 = rng.uniform(0, 0.49, 2)
        params = phi_to_gamma(phi1, phi2, inp.lambda1, inp.lambda_minus1)
        gij, ok = phi_block_gammas(phi1, phi2, inp)
        assert ok
        np.testing.assert_allclose(gij, block_gammas(inp.indices, inp.lambdas, params), rtol=1e-12)
        assert gij[0] == pytest.approx(phi1, rel=1e-12)
        # the leading negative spike maps to -phi2 / (1 - 2 phi2), not phi2
        assert gij[3] == pytest.approx(-phi2 / (1 - 2 * phi2), rel=1e-12)


def test_grid_marks_poles_infeasible():
    inp = AsymptoticInputs([-1], [-0.99], [0.02], 0.5)
    g = grid_values(inp, np.array([0.0]), np.array([0.25, 0.5, 0.75]))
    assert np.isfinite(g[0, 0])
    assert np.all(np.isinf(g[0, 1:]))


def test_grid_search_without_spikes_is_origin():
    res = grid_search(AsymptoticInputs([], [], [], 0.4))
    assert (res.phi1, res.phi2, res.gamma1, res.gamma2) == (0.0, 0.0, 0.0, 0.0)
    assert res.gbar == 1.0


def test_grid_search_single_spike_interior():
    res = grid_search(SINGLE)
    assert 0.0 < res.phi1 < 1.0
    dense = np.arange(1000) / 1000
    g = grid_values(SINGLE, dense, np.array([0.0]))[:, 0]
    assert res.gbar <= g.min() + 1e-12
    assert abs(res.phi1 - dense[np.argmin(g)]) <= 2e-3
    assert res.gbar <= asymptotic_risk(SINGLE, RegularizationParams(0.0, 0.0))


def test_grid_search_beats_sce_and_finer_grids(rng):
    for n in (60, 100, 200, 500):
        inp = AsymptoticInputs.from_model(reference_model(50), 50 / n)
        res = grid_search(inp)
        assert res.gbar <= asymptotic_risk(inp, SCE_PARAMS) + 1e-12
        assert res.gbar <= asymptotic_risk(inp, RegularizationParams(0.0, 0.0)) + 1e-12
        assert res.gbar == pytest.approx(asymptotic_risk(inp, res.params), rel=1e-12)
        for k in (10, 25, 50):
            coarse = grid_search(inp, k, refine=1)
            fine = grid_search(inp, 2 * k, refine=1)
            assert fine.gbar <= coarse.gbar + 1e-12
            assert grid_search(inp, k, refine=10).gbar <= coarse.gbar
    for _ in range(20):
        inp = _random_inputs(rng, 2, 1)
        assert grid_search(inp, 20, 1).gbar >= grid_search(inp, 40, 1).gbar - 1e-12


def test_monte_carlo_ybar():
    # (0.5, 0.5) puts the leading negative spike on its pole, so the second block uses 0.3
    model = reference_model(50)
    n = 500
    inp = AsymptoticInputs.from_model(model, 50 / n)
    params = phi_to_gamma(0.5, 0.3, inp.lambda1, inp.lambda_minus1)
    xs, ys = [], []
    for rep in range(200):
        S = sample_covariance(generate_returns(model, np.zeros(50), n, 5000 + rep))
        est = CorrectedSpectrumEstimator.from_oracle(model, sample_spectrum(S, n))
        x, y = empirical_x_y(est.precision(params), model)
        xs.append(x)
        ys.append(y)
    assert abs(np.mean(ys) - ybar(inp, params)) / ybar(inp, params) < 0.05
    assert abs(np.mean(xs) - xbar(inp, params)) / xbar(inp, params) < 0.05


def test_grid_scan_csv():
    buf = io.StringIO()
    write_grid_scan(SINGLE, 4, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "phi1,phi2,gbar"
    assert len(lines) == 17
    phi1, phi2, g = lines[1].split(",")
    assert (float(phi1), float(phi2), float(g)) == (0.0, 0.0, asymptotic_risk(SINGLE, RegularizationParams(0, 0)))
