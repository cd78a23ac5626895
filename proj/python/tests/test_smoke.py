import json
import math

import numpy as np
import pytest

import countgraph as cg


def scalar_ar1(a=0.5, sigma=1.0):
    return cg.ModelParams(np.zeros((1, 1)), [np.array([[a]])], np.array([sigma]))


def test_version_and_exports():
    assert cg.__version__
    for name in ("ModelParams", "fit", "simulate", "sweep", "select_gamma", "select_order"):
        assert hasattr(cg, name)


def test_params_roundtrip_and_validation():
    m = scalar_ar1()
    assert (m.n, m.p, m.q) == (1, 1, 1)
    assert cg.validate_params(m) == []
    back = cg.ModelParams.from_json(m.to_json())
    np.testing.assert_array_equal(back.to_vector(), m.to_vector())
    assert json.loads(m.to_json())["sigma"] == [1.0]
    assert cg.validate_params(scalar_ar1(a=1.0))
    with pytest.raises(ValueError):
        cg.ModelParams(np.zeros((1, 2)), [np.zeros((1, 1))], np.ones(1))


def test_stationary_covariance_ar1():
    r = cg.stationary_covariance(scalar_ar1())
    assert r.shape == (1, 1)
    assert abs(r[0, 0] - 4.0 / 3.0) < 1e-12


def test_w_matrices_and_spectral_identity():
    a = np.array([[0.4, 0.1], [0.0, 0.3]])
    m = cg.ModelParams(np.zeros((1, 2)), [a], np.array([1.0, 0.5]))
    w = cg.compute_W(m)
    assert len(w) == 2
    omega = 0.7
    b = np.eye(2) - a * np.exp(-1j * omega)
    direct = b.conj().T @ np.diag(1.0 / np.array([1.0, 0.25])) @ b
    np.testing.assert_allclose(cg.inverse_spectral_density(m, omega), direct, atol=1e-12)
    expansion = -w[0] + 0.5 * (w[1] * np.exp(-1j * omega) + w[1].T * np.exp(1j * omega))
    np.testing.assert_allclose(expansion, direct, atol=1e-12)
    assert cg.penalty_h1(w) >= 0.0


def test_graph_extraction():
    a = np.array([[0.3, 0.0], [0.2, 0.3]])
    m = cg.ModelParams(np.zeros((1, 2)), [a], np.ones(2))
    g = cg.extract_graph(m)
    assert [(i, j) for i, j, _ in g["undirected"]] == [(0, 1)]
    assert [(f, t) for f, t, _ in g["directed"]] == [(0, 1)]
    rho = cg.partial_coherence(m, 64)
    assert rho.shape == (2, 2)
    assert 0.0 < rho[0, 1] <= 1.0


def test_simulate_is_deterministic():
    a = cg.simulate(n=4, p=1, length=50, seed=3)
    b = cg.simulate(n=4, p=1, length=50, seed=3)
    assert a["counts"].shape == (4, 50)
    np.testing.assert_array_equal(a["counts"], b["counts"])
    assert a["params"].spectral_radius() < 0.95


def test_density_and_sampler():
    y = np.array([[1, 0, 2]], dtype=np.int64)
    z = np.ones((3, 1))
    m = scalar_ar1()
    lp = cg.joint_log_density(y, z, np.zeros((1, 3)), m)
    assert math.isfinite(lp)
    draws, acc = cg.sample_latent(y, z, m, samples=50, burn_in=20, seed=2)
    assert len(draws) == 50 and draws[0].shape == (1, 3)
    assert 0.0 < acc[0] <= 1.0


def test_fit_and_selection():
    sim = cg.simulate(n=3, p=1, length=60, sparsity=0.4, noise_var=0.1, seed=5)
    out = cg.fit(sim["counts"], sim["covariates"], order=1, gamma=0.1, samples=20, burn_in=20, max_iter=3)
    assert cg.validate_params(out["params"]) == []
    assert len(out["trace"]["iteration"]) <= 3
    sw = cg.sweep(sim["counts"], sim["covariates"], order=1, gammas=[0.0, 1.0], samples=20, burn_in=20,
                  max_iter=2)
    assert len(sw["points"]) == 2
    assert sw["chosen_gamma"] in (0.0, 1.0)
    order = cg.select_order(sim["counts"], sim["covariates"], orders=[0, 1], samples=20, burn_in=20, max_iter=2)
    assert order["chosen_order"] in (0, 1)


def test_select_gamma_fixture():
    gammas = [0, 0.1706, 0.5084, 0.6829, 0.7969, 0.9795, 1.1266, 1.5951, 2.0186, 2.2213, 2.6271, 3.35]
    bics = [12111.43, 10846.09, 10583.76, 10197.97, 10227.05, 10313.73, 10512.76, 10734.25, 10973.20,
            11275.20, 11510.35, 11811.79]
    assert cg.select_gamma(gammas, bics) == 0.6829
    with pytest.raises(ValueError):
        cg.select_gamma([0.1], [])


def test_bad_counts_raise_value_error():
    with pytest.raises(ValueError):
        cg.fit(np.array([[1, 2]], dtype=np.int64), order=1)


def test_laplace_marginal_order_zero_matches_1d_sum():
    m = cg.ModelParams(np.full((1, 1), 0.3), [], np.array([0.7]))
    y = np.array([[0, 1, 2]], dtype=np.int64)
    joint, mode = cg.laplace_log_marginal(y, np.ones((3, 1)), m)
    assert mode.shape == (1, 3)
    parts = [cg.laplace_log_marginal(np.array([[v]], dtype=np.int64), np.ones((1, 1)), m)[0] for v in (0, 1, 2)]
    assert abs(joint - sum(parts)) < 1e-9
