"""Linearized covariances against algebra and Monte Carlo oracles."""

import numpy as np
import pytest

import deeprf
from deeprf.sim import propagate_features, sample_inputs
from tests.conftest import make_spec


def covariance_mc_oracle(network, n_samples, seed):
    """Brute-force sample covariance of the post-activations."""
    x0 = sample_inputs(network.spec, n_samples, seed, "mc-oracle")
    feats = propagate_features(network, x0)
    return feats @ feats.T / n_samples


def cross_mc_oracle(target, learner, n_samples, seed):
    x0 = sample_inputs(target.spec, n_samples, seed, "mc-oracle")
    return propagate_features(target, x0) @ propagate_features(learner, x0).T / n_samples


def test_identity_network_collapses_to_weight_product():
    spec = make_spec(2, 1.0, deeprf.identity(), 80)
    net = deeprf.sample_network(spec, seed=0)
    co = deeprf.compute_coefficients(spec)
    oms = deeprf.omega_lin(net, co)
    prod = net.weights[1] @ net.weights[0] / np.sqrt(80 * 80)
    np.testing.assert_allclose(oms[-1], prod @ prod.T, atol=1e-12)


def test_sign_layer_closed_form(sign_spec):
    net = deeprf.sample_network(sign_spec, seed=2)
    co = deeprf.compute_coefficients(sign_spec)
    om1 = deeprf.omega_lin(net, co)[-1]
    d = sign_spec.d
    want = (2 / np.pi) * net.weights[0] @ net.weights[0].T / d + (1 - 2 / np.pi) * np.eye(d)
    np.testing.assert_allclose(om1, want, atol=1e-10)


@pytest.mark.slow
def test_omega_lin_matches_mc_covariance():
    spec = make_spec(2, 1.0, deeprf.tanh_scaled(2.0), 150)
    net = deeprf.sample_network(spec, seed=5)
    co = deeprf.compute_coefficients(spec)
    n = 100_000
    emp = covariance_mc_oracle(net, n, seed=99)
    diff = deeprf.omega_lin(net, co)[-1] - emp
    rms = np.sqrt(np.mean(diff**2))
    assert rms < 5 / np.sqrt(n)


@pytest.mark.slow
def test_psi_lin_erf_target_mc_oracle():
    spec = make_spec(1, 1.0, deeprf.erf(), 150)
    net = deeprf.sample_network(spec, seed=8)
    co = deeprf.compute_coefficients(spec)
    n = 100_000
    emp = covariance_mc_oracle(net, n, seed=100)
    diff = deeprf.psi_lin(net, co) - emp
    assert np.sqrt(np.mean(diff**2)) < 5 / np.sqrt(n)


def test_psi_depth_zero_returns_omega0():
    d = 40
    om = np.diag(np.linspace(0.5, 1.5, d))
    spec = make_spec(0, (), (), d, omega0=om)
    net = deeprf.sample_network(spec, seed=0)
    co = deeprf.compute_coefficients(spec)
    np.testing.assert_array_equal(deeprf.psi_lin(net, co), om)


def test_phi_lin_trivial_cases():
    d = 50
    spec0 = make_spec(0, (), (), d)
    spec1 = make_spec(1, 1.0, deeprf.identity(), d)
    net0 = deeprf.sample_network(spec0, seed=1)
    net1 = deeprf.sample_network(spec1, seed=2)
    co0 = deeprf.compute_coefficients(spec0)
    co1 = deeprf.compute_coefficients(spec1)
    np.testing.assert_allclose(deeprf.phi_lin(net0, net0, co0, co0), np.eye(d))
    np.testing.assert_allclose(
        deeprf.phi_lin(net0, net1, co0, co1), net1.weights[0].T / np.sqrt(d), atol=1e-14
    )


@pytest.mark.slow
def test_phi_lin_mc_oracle():
    d = 150
    target = deeprf.sample_network(make_spec(1, 1.0, deeprf.tanh_scaled(1.0), d), seed=3)
    learner = deeprf.sample_network(make_spec(2, 1.0, deeprf.tanh_scaled(1.0), d), seed=4)
    cot = deeprf.compute_coefficients(target.spec)
    col = deeprf.compute_coefficients(learner.spec)
    n = 100_000
    emp = cross_mc_oracle(target, learner, n, seed=101)
    diff = deeprf.phi_lin(target, learner, cot, col) - emp
    assert np.sqrt(np.mean(diff**2)) < 5 / np.sqrt(n)


def test_trace_omega_identity_and_sign():
    spec = make_spec(3, 1.0, deeprf.identity(), 60)
    co = deeprf.compute_coefficients(spec)
    assert deeprf.trace_omega(co, 1.0) == pytest.approx(1.0)
    co_sign = deeprf.compute_coefficients(make_spec(1, 1.0, deeprf.sign(), 60))
    assert deeprf.trace_omega(co_sign, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_trace_omega_matches_sampled_trace():
    spec = make_spec(2, 1.2, deeprf.tanh_scaled(2.0), 400)
    co = deeprf.compute_coefficients(spec)
    want = deeprf.trace_omega(co, 1.0)
    vals = []
    for seed in range(20):
        net = deeprf.sample_network(spec, seed=seed)
        om = deeprf.omega_lin(net, co)[-1]
        vals.append(np.trace(om) / om.shape[0])
    assert abs(np.mean(vals) - want) < 3 / np.sqrt(400)


def test_effective_linear_identity():
    spec = make_spec(3, 1.0, deeprf.tanh_scaled(2.0), 90)
    net = deeprf.sample_network(spec, seed=6)
    co = deeprf.compute_coefficients(spec)
    eff = deeprf.effective_linear(net, co)
    om = deeprf.omega_lin(net, co)[-1]
    recon = eff.a_matrix @ eff.a_matrix.T + eff.noise_cov
    assert np.max(np.abs(recon - om)) < 1e-10 * max(1.0, np.max(np.abs(om)))


def test_effective_linear_edge_cases():
    spec1 = make_spec(1, 1.0, deeprf.sign(), 70)
    net1 = deeprf.sample_network(spec1, seed=1)
    co1 = deeprf.compute_coefficients(spec1)
    eff1 = deeprf.effective_linear(net1, co1)
    np.testing.assert_allclose(eff1.noise_cov, (1 - 2 / np.pi) * np.eye(70), atol=1e-12)
    idspec = make_spec(2, 1.0, deeprf.identity(), 70)
    idnet = deeprf.sample_network(idspec, seed=1)
    effid = deeprf.effective_linear(idnet, deeprf.compute_coefficients(idspec))
    assert effid.noise_level == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(deeprf.ConfigurationError):
        deeprf.effective_linear(
            deeprf.sample_network(make_spec(0, (), (), 70), seed=0),
            deeprf.compute_coefficients(make_spec(0, (), (), 70)),
        )


def test_noise_trace_matches_effective_linear():
    spec = make_spec(3, 1.0, deeprf.tanh_scaled(1.0), 350)
    co = deeprf.compute_coefficients(spec)
    net = deeprf.sample_network(spec, seed=9)
    eff = deeprf.effective_linear(net, co)
    assert eff.noise_level == pytest.approx(deeprf.noise_trace(co), abs=5 / np.sqrt(350))


def test_psd_preservation():
    spec = make_spec(4, 0.8, deeprf.tanh_scaled(2.0), 60)
    net = deeprf.sample_network(spec, seed=4)
    co = deeprf.compute_coefficients(spec)
    for om in deeprf.omega_lin(net, co):
        assert np.linalg.eigvalsh(om)[0] > -1e-9


def test_covariance_set_build_validate_and_bundle(tmp_path):
    d = 60
    target = deeprf.sample_network(make_spec(1, 0.8, deeprf.sign(), d), seed=1)
    learner = deeprf.sample_network(make_spec(2, 1.0, deeprf.tanh_scaled(2.0), d), seed=2)
    cot = deeprf.compute_coefficients(target.spec)
    col = deeprf.compute_coefficients(learner.spec)
    theta = np.random.default_rng(0).standard_normal(target.spec.k_out)
    cov = deeprf.build_covariance_set(learner, col, target, cot, theta)
    cov.validate()
    assert cov.rho == pytest.approx(theta @ cov.psi @ theta / cov.k_star)
    cov.save(tmp_path / "bundle", d=d, seed=123)
    back = deeprf.CovarianceSet.load(tmp_path / "bundle")
    np.testing.assert_allclose(back.omega, cov.omega)
    np.testing.assert_allclose(back.phi, cov.phi)
    np.testing.assert_allclose(back.theta_star, theta)
    assert back.meta["seed"] == 123 and back.meta["d"] == d
