"""Monte Carlo machinery: generation, fitting, empirical errors, spectra."""

import numpy as np
import pytest

import deeprf
from tests.conftest import make_spec


def setup_pair(d=120, seed=0):
    lspec = make_spec(1, 1.0, deeprf.tanh_scaled(2.0), d)
    tspec = make_spec(0, (), (), d)
    lnet = deeprf.sample_network(lspec, seed=seed)
    tnet = deeprf.sample_network(tspec, seed=seed + 1)
    theta = np.asarray(deeprf.rng.stream(seed + 2, "theta").standard_normal(d))
    return lnet, tnet, theta


def test_identity_target_labels_exact():
    d = 80
    spec = make_spec(0, (), (), d)
    net = deeprf.sample_network(spec, seed=0)
    theta = np.ones(d)
    ds = deeprf.generate(net, net, theta, 30, 0.0, seed=5)
    x = deeprf.sample_inputs(spec, 30, 5, "train-inputs")
    np.testing.assert_allclose(ds.y, theta @ x / np.sqrt(d), atol=1e-12)


def test_sign_readout_labels_binary():
    lnet, tnet, theta = setup_pair()
    ds = deeprf.generate(lnet, tnet, theta, 50, 0.0, seed=1, readout=np.sign)
    assert set(np.unique(ds.y)) <= {-1.0, 1.0}


def test_generate_reproducible_and_noise_stream_isolated():
    lnet, tnet, theta = setup_pair()
    a = deeprf.generate(lnet, tnet, theta, 40, 0.5, seed=9)
    b = deeprf.generate(lnet, tnet, theta, 40, 0.5, seed=9)
    np.testing.assert_array_equal(a.y, b.y)
    clean = deeprf.generate(lnet, tnet, theta, 40, 0.0, seed=9)
    np.testing.assert_allclose(a.f_test, clean.f_test)
    assert not np.allclose(a.y, clean.y)


def test_feature_second_moment_concentrates():
    d = 150
    spec = make_spec(1, 1.0, deeprf.tanh_scaled(2.0), d)
    net = deeprf.sample_network(spec, seed=3)
    co = deeprf.compute_coefficients(spec)
    n = 30_000
    x0 = deeprf.sample_inputs(spec, n, 7, "conc")
    feats = deeprf.propagate_features(net, x0)
    emp = feats @ feats.T / n
    diff = emp - deeprf.omega_lin(net, co)[-1]
    assert np.sqrt(np.mean(diff**2)) < 5 / np.sqrt(n)


def test_ridge_shrinks_to_zero():
    lnet, tnet, theta = setup_pair()
    ds = deeprf.generate(lnet, tnet, theta, 60, 0.0, seed=2)
    fit = deeprf.fit_ridge(ds, 1e9)
    assert np.linalg.norm(fit.theta_hat) < 1e-6


def test_ridge_planted_recovery():
    d = 100
    spec = make_spec(1, 1.0, deeprf.tanh_scaled(2.0), d)
    net = deeprf.sample_network(spec, seed=1)
    theta0 = np.asarray(deeprf.rng.stream(4, "planted").standard_normal(d))
    n = 800
    x = deeprf.sample_inputs(spec, n, 11, "train-inputs")
    feats = deeprf.propagate_features(net, x)
    y = theta0 @ feats / np.sqrt(d)
    ds = deeprf.Dataset(feats, y, feats, y, y, 0.0, 11)
    fit = deeprf.fit_ridge(ds, 1e-8)
    assert np.linalg.norm(fit.theta_hat - theta0) / np.linalg.norm(theta0) < 1e-3


def test_ridge_matches_gradient_descent_oracle():
    lnet, tnet, theta = setup_pair(d=60)
    ds = deeprf.generate(lnet, tnet, theta, 90, 0.0, seed=3)
    lam = 0.2
    fit = deeprf.fit_ridge(ds, lam)
    # gradient descent on the objective the closed form minimizes:
    # sum 0.5 (y - theta.Z)^2 + 0.5 lam |theta|^2 with Z = X/sqrt(k)
    X, y = ds.features, ds.y
    Z = X / np.sqrt(X.shape[0])
    th = np.zeros(X.shape[0])
    step = 1.0 / (np.linalg.norm(Z, 2) ** 2 + lam)
    for _ in range(20000):
        th -= step * (Z @ (Z.T @ th - y) + lam * th)
    assert np.linalg.norm(th - fit.theta_hat) / np.linalg.norm(fit.theta_hat) < 1e-6


def test_logistic_strictly_convex_converges():
    lnet, tnet, theta = setup_pair()
    ds = deeprf.generate(lnet, tnet, theta, 50, 0.0, seed=4, readout=np.sign)
    fit = deeprf.fit_logistic(ds, 0.05)
    assert fit.grad_norm < 1e-8
    assert np.isfinite(np.linalg.norm(fit.theta_hat))


def test_logistic_matches_first_order_oracle():
    lnet, tnet, theta = setup_pair(d=50)
    ds = deeprf.generate(lnet, tnet, theta, 120, 0.0, seed=6, readout=np.sign)
    lam = 0.1
    fit = deeprf.fit_logistic(ds, lam)
    X, y = ds.features, ds.y
    Z = X / np.sqrt(X.shape[0])
    obj = lambda t: float(np.sum(np.logaddexp(0, -y * (t @ Z))) + 0.5 * lam * t @ t)
    th = np.zeros(X.shape[0])
    step = 4.0 / (np.linalg.norm(Z, 2) ** 2 + lam)
    for _ in range(60000):
        p = 1.0 / (1.0 + np.exp(y * (th @ Z)))
        th -= step * (-Z @ (y * p) + lam * th)
    assert obj(fit.theta_hat) <= obj(th) + 1e-9


def test_empty_train_gives_zero_logistic():
    lnet, tnet, theta = setup_pair()
    ds = deeprf.generate(lnet, tnet, theta, 1, 0.0, seed=8, readout=np.sign)
    empty = deeprf.Dataset(ds.features[:, :0], ds.y[:0], ds.features_test,
                           ds.y_test, ds.f_test, 0.0, 8)
    fit = deeprf.fit_logistic(empty, 0.5)
    np.testing.assert_allclose(fit.theta_hat, 0.0)


def test_empirical_error_trivial_cases():
    lnet, tnet, theta = setup_pair()
    ds = deeprf.generate(lnet, tnet, theta, 30, 0.0, seed=10, readout=np.sign)
    k = ds.features.shape[0]
    rnd = deeprf.FitResult(np.asarray(
        deeprf.rng.stream(1, "rand").standard_normal(k)), 0.0, 1, 0.0)
    err, se = deeprf.empirical_error(rnd, ds, "misclassification")
    assert err == pytest.approx(0.5, abs=5 * se + 0.02)
    with pytest.raises(deeprf.ConfigurationError):
        deeprf.empirical_error(rnd, ds, "nope")


def test_matched_perfect_predictor_zero_mse():
    d = 70
    spec = make_spec(0, (), (), d)
    net = deeprf.sample_network(spec, seed=0)
    theta = np.asarray(deeprf.rng.stream(2, "t").standard_normal(d))
    ds = deeprf.generate(net, net, theta, 20, 0.0, seed=3)
    fit = deeprf.FitResult(theta, 0.0, 1, 0.0)
    err, _ = deeprf.empirical_error(fit, ds, "mse")
    assert err == pytest.approx(0.0, abs=1e-20)


@pytest.mark.slow
def test_empirical_spectrum_mp():
    d = 500
    spec = make_spec(1, 1.0, deeprf.identity(), d)
    net = deeprf.sample_network(spec, seed=0)
    measure = deeprf.empirical_spectrum("sample_covariance", net, 100_000, seed=1)
    # closed-form MP cdf: F = (phi + sin phi)/pi with phi = arccos(1 - x/2)
    grid = np.linspace(1e-4, 4.5, 900)
    phi = np.arccos(1.0 - np.clip(grid, 0, 4) / 2.0)
    cdf = (phi + np.sin(phi)) / np.pi
    emp_cdf = np.searchsorted(np.sort(measure.x), grid) / measure.x.size
    assert np.max(np.abs(cdf - emp_cdf)) < 0.03


def test_empirical_spectrum_deterministic_and_chunked():
    spec = make_spec(1, 0.8, deeprf.tanh_scaled(2.0), 60)
    net = deeprf.sample_network(spec, seed=2)
    a = deeprf.empirical_spectrum("sample_covariance", net, 500, seed=5, chunk=128)
    b = deeprf.empirical_spectrum("sample_covariance", net, 500, seed=5, chunk=500)
    np.testing.assert_allclose(a.x, b.x, atol=1e-10)


def test_gcm_features_match_covariances():
    d = 60
    lnet, tnet, theta = setup_pair(d=d)
    col = deeprf.compute_coefficients(lnet.spec)
    cot = deeprf.compute_coefficients(tnet.spec)
    cov = deeprf.build_covariance_set(lnet, col, tnet, cot, theta)
    n = 60_000
    u, v = deeprf.sample_gcm_features(cov, n, seed=3)
    np.testing.assert_allclose(u @ u.T / n, cov.psi, atol=6 / np.sqrt(n) * 3)
    np.testing.assert_allclose(u @ v.T / n, cov.phi, atol=6 / np.sqrt(n) * 3)
