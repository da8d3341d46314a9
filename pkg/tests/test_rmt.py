"""Spectral solvers against closed forms, eigenvalue oracles and each other."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import deeprf
from deeprf.rmt import dist_to_positive_axis
from tests.conftest import make_spec

GOLDEN = (np.sqrt(5) - 1) / 2  # MP Gram trace at z=-1, c=1: root of m^2+m-1


def test_mp_point_mass_golden_ratio():
    res = deeprf.mp_selfconsistent(deeprf.SpectralMeasure.point(1.0), 1.0, complex(-1.0))
    assert res.m.real == pytest.approx(GOLDEN, abs=1e-12)
    assert res.residual < 1e-10


def test_mp_atoms_match_point_closed_form():
    # many equal atoms go through the iterative kernel; must match the quadratic
    measure = deeprf.SpectralMeasure.from_atoms(np.ones(500))
    res = deeprf.mp_selfconsistent(measure, 1.0, complex(-1.0))
    assert res.m.real == pytest.approx(GOLDEN, abs=1e-10)


def test_mp_far_field_and_zero_measure():
    measure = deeprf.SpectralMeasure.from_atoms([0.5, 1.5])
    z = complex(-1e6, 0.0)
    assert deeprf.mp_selfconsistent(measure, 0.7, z).m == pytest.approx(-1 / z, rel=1e-2)
    zero = deeprf.SpectralMeasure.point(0.0)
    z2 = complex(0.3, 0.8)
    assert deeprf.mp_selfconsistent(zero, 0.7, z2).m == pytest.approx(-1 / z2, abs=1e-12)


@pytest.mark.slow
def test_mp_against_wishart_eigenvalues():
    d = 4000
    g = np.random.default_rng(0).standard_normal((d, d))
    evs = np.linalg.eigvalsh(g @ g.T / d)
    emp = np.mean(1.0 / (evs + 1.0))
    assert emp == pytest.approx(GOLDEN, abs=5e-3)


@settings(max_examples=30, deadline=None)
@given(
    re=st.floats(-4.0, 2.0),
    im=st.floats(0.05, 3.0),
    c=st.floats(0.2, 3.0),
    scale=st.floats(0.3, 2.0),
)
def test_mp_nevanlinna_and_scale_covariance(re, im, c, scale):
    z = complex(re, im)
    atoms = deeprf.SpectralMeasure.from_atoms([0.4, 1.0, 2.5], [0.5, 0.3, 0.2])
    m = deeprf.mp_selfconsistent(atoms, c, z).m
    assert m.imag > 0  # Nevanlinna: Im z > 0 -> Im m > 0
    # scaling the measure by a and z by a rescales m by 1/a
    scaled = atoms.scaled(scale)
    m2 = deeprf.mp_selfconsistent(scaled, c, scale * z).m
    assert m2 == pytest.approx(m / scale, rel=1e-8)


def test_mhat_conversion_far_field():
    atoms = deeprf.SpectralMeasure.from_atoms([1.0, 2.0])
    z = complex(-50.0, 0.0)
    mh = deeprf.mp_mhat(atoms, 0.5, z)
    # sample covariance of mean 1.5 population: m_hat ~ -1/z - mean/z^2
    assert mh == pytest.approx(-1 / z - 1.5 / z**2, abs=3e-3)


# --------------------------------------------------------------------------
# layer recursion
# --------------------------------------------------------------------------


def test_chain_isotropic_design_is_plain_mp():
    # identity single layer on an exactly isotropic input Gram: the peeled
    # layer is one MP factor, so the top trace is the MP transform itself
    co = deeprf.compute_coefficients(make_spec(1, 1.0, deeprf.identity(), 100))
    gram = deeprf.SpectralMeasure.point(1.0)
    rng = np.random.default_rng(1)
    for _ in range(20):
        z = complex(rng.uniform(-4, 1), rng.choice([-1, 1]) * rng.uniform(0.1, 2))
        st_ = deeprf.layer_recursion(co, 1.0, z, input_gram=gram)
        want = deeprf.mp_selfconsistent(deeprf.SpectralMeasure.point(1.0), 1.0, z).m
        assert st_.wcm_top == pytest.approx(want, abs=1e-8)
        assert max(st_.residuals) < 1e-10


def test_chain_gaussian_data_is_product_wishart():
    # with Gaussian inputs the same architecture picks up the data MP factor
    co = deeprf.compute_coefficients(make_spec(1, 1.0, deeprf.identity(), 100))
    st_ = deeprf.layer_recursion(co, 1.0, complex(-1.0))
    assert st_.wcm_top.real != pytest.approx(GOLDEN, abs=1e-3)
    d = 1500
    g = np.random.default_rng(2)
    X0 = g.standard_normal((d, d))
    W = g.standard_normal((d, d))
    X1 = W @ X0 / np.sqrt(d)
    emp = np.mean(1.0 / (np.linalg.eigvalsh(X1 @ X1.T / d) + 1.0))
    assert st_.wcm_top.real == pytest.approx(emp, abs=0.02)


def test_chain_far_field():
    co = deeprf.compute_coefficients(make_spec(3, 1.3, deeprf.tanh_scaled(2.0), 100))
    z = complex(-1e7, 0.0)
    st_ = deeprf.layer_recursion(co, 2.0, z)
    assert st_.wcm_top == pytest.approx(-1 / z, rel=1e-3)


def test_chain_self_consistency_residuals_and_gram_identity():
    co = deeprf.compute_coefficients(make_spec(2, (1.2, 0.8), deeprf.tanh_scaled(2.0), 100))
    st_ = deeprf.layer_recursion(co, 2.0, complex(-0.3))
    assert max(st_.residuals) < 1e-10
    # gram chain multiplies the c factors
    g = st_.gram[0]
    for c in st_.c:
        g = c * g
    assert g == pytest.approx(st_.gram[-1], rel=1e-10)


@pytest.mark.slow
def test_chain_L1_sign_monte_carlo():
    gam, alpha, lam, d = 1.5, 2.0, 0.7, 2500
    spec = make_spec(1, gam, deeprf.sign(), d)
    co = deeprf.compute_coefficients(spec)
    st_ = deeprf.layer_recursion(co, alpha, complex(-lam))
    net = deeprf.sample_network(spec, seed=0)
    x0 = deeprf.sample_inputs(spec, int(alpha * d), 0, "t")
    feats = deeprf.propagate_features(net, x0)
    k = feats.shape[0]
    emp = np.mean(1.0 / (np.linalg.eigvalsh(feats @ feats.T / k) + lam))
    assert st_.wcm_top.real == pytest.approx(emp, abs=5 / np.sqrt(d))


def test_wcm_depth_zero_matches_mp():
    # depth 0: features are the data; gram side k_0 = d
    co = deeprf.compute_coefficients(make_spec(0, (), (), 100))
    st_ = deeprf.layer_recursion(co, 1.0, complex(-1.0))
    assert st_.wcm[0].real == pytest.approx(GOLDEN, abs=1e-10)


def test_chain_rejects_positive_axis():
    co = deeprf.compute_coefficients(make_spec(1, 1.0, deeprf.identity(), 100))
    with pytest.raises(deeprf.ConfigurationError):
        deeprf.layer_recursion(co, 1.0, complex(0.5, 0.0))


# --------------------------------------------------------------------------
# population spectrum
# --------------------------------------------------------------------------


def test_density_mp_closed_form():
    co = deeprf.compute_coefficients(make_spec(1, 1.0, deeprf.identity(), 100))
    res = deeprf.density_scheme(co, np.array([1.0]), eta=1e-6)
    assert res.density[0] == pytest.approx(np.sqrt(3) / (2 * np.pi), abs=1e-4)
    assert res.atoms == []


def test_density_mass_normalization():
    co = deeprf.compute_coefficients(make_spec(2, (1.2, 0.6), deeprf.tanh_scaled(2.0), 100))
    grid = np.linspace(1e-3, 8.0, 1200)
    res = deeprf.density_scheme(co, grid, eta=1e-6)
    assert res.mass() == pytest.approx(1.0, abs=0.01)


def test_density_atom_bookkeeping_matches_eigenvalues():
    spec = make_spec(2, (0.7, 1.2), deeprf.sign(), 500)
    co = deeprf.compute_coefficients(spec)
    atoms = deeprf.density_scheme(co, np.array([0.5, 1.0]), eta=1e-6).atoms
    assert len(atoms) == 1
    pos, mass = atoms[0]
    assert pos == pytest.approx(1 - 2 / np.pi)
    assert mass == pytest.approx(1 - 0.7 / 1.2, abs=1e-12)
    net = deeprf.sample_network(spec, seed=0)
    evs = np.linalg.eigvalsh(deeprf.omega_lin(net, co)[-1])
    frac = np.mean(np.abs(evs - pos) < 1e-10)
    assert frac == pytest.approx(mass, abs=1e-9)


def test_population_resolvent_matches_sampled_eigenvalues():
    spec = make_spec(2, 1.0, deeprf.tanh_scaled(2.0), 700)
    co = deeprf.compute_coefficients(spec)
    pop = deeprf.PopulationResolvent(co)
    net = deeprf.sample_network(spec, seed=1)
    evs = np.linalg.eigvalsh(deeprf.omega_lin(net, co)[-1])
    for zeta in [-0.05, -0.5, -2.0]:
        emp = np.mean(1.0 / (evs - zeta))
        assert complex(pop(zeta)).real == pytest.approx(emp, abs=0.02)
        assert complex(pop(zeta)).imag == pytest.approx(0.0, abs=1e-12)


def test_population_resolvent_mean_matches_trace_formula():
    co = deeprf.compute_coefficients(make_spec(3, 0.9, deeprf.tanh_scaled(1.0), 100))
    pop = deeprf.PopulationResolvent(co)
    assert pop.mean == pytest.approx(deeprf.trace_omega(co, 1.0))
    # far-field: m(z) ~ -1/z - mean/z^2
    z = -3e4
    assert complex(pop(z)).real == pytest.approx(-1 / z - pop.mean / z**2, rel=1e-4)


def test_two_routes_consistency_ks():
    """Density from the full scheme vs population(L-1) + one explicit MP step."""
    gam = (1.2, 0.8)
    spec = make_spec(2, gam, deeprf.tanh_scaled(2.0), 100)
    co = deeprf.compute_coefficients(spec)
    grid = np.linspace(1e-3, 6.0, 800)
    route1 = deeprf.density_scheme(co, grid, eta=1e-6).density

    co1 = deeprf.compute_coefficients(make_spec(1, gam[0], deeprf.tanh_scaled(2.0), 100))
    pop1 = deeprf.PopulationResolvent(co1)
    lower = deeprf.SpectralMeasure.from_callable(pop1, mean=pop1.mean)
    a2, b2 = co.a_coeffs()[1], co.b_coeffs()[1]
    rho = gam[0] / gam[1]  # k_1/k_2

    def m_route2(z):
        u = (z - b2) / a2
        mw = rho**2 * deeprf.mp_mhat(lower, rho, rho * u) - (1 - rho) / u
        return mw / a2

    route2 = np.array([max(m_route2(complex(l, 1e-6)).imag / np.pi, 0.0) for l in grid])
    cdf1 = np.cumsum(route1) * (grid[1] - grid[0])
    cdf2 = np.cumsum(route2) * (grid[1] - grid[0])
    assert np.max(np.abs(cdf1 - cdf2)) < 0.02


def test_sample_covariance_density_smooths_population():
    co = deeprf.compute_coefficients(make_spec(1, 1.0, deeprf.sign(), 100))
    grid = np.linspace(1e-3, 4.0, 400)
    res = deeprf.sample_covariance_density(co, samples_ratio=0.01, grid=grid)
    assert res.mass() == pytest.approx(1.0, abs=0.02)


# --------------------------------------------------------------------------
# derivatives
# --------------------------------------------------------------------------


def test_resolvent_derivative_trivial():
    # df/dz of -1/z is 1/z^2: +1 at z=-1 (the lambda-derivative of the map
    # lambda -> f(-lambda) is its negative)
    d = deeprf.resolvent_derivative(lambda z: -1 / z, complex(-1.0))
    assert d == pytest.approx(1.0, abs=1e-10)


def test_resolvent_derivative_mp_symbolic():
    # closed form: m' = -m(m+1)/(z(2m+1)) = 1/sqrt(5) at z=-1, c=1
    f = lambda z: deeprf.mp_selfconsistent(deeprf.SpectralMeasure.point(1.0), 1.0, z).m
    d = deeprf.resolvent_derivative(f, complex(-1.0))
    assert d.real == pytest.approx(1 / np.sqrt(5), abs=1e-9)


def test_resolvent_derivative_chain_contour_vs_fd():
    co = deeprf.compute_coefficients(make_spec(2, 1.1, deeprf.tanh_scaled(2.0), 100))
    f = lambda z: deeprf.layer_recursion(co, 1.7, z).wcm_top
    # fd_check inside raises if contour and finite differences disagree > 1e-6
    d = deeprf.resolvent_derivative(f, complex(-0.4), fd_check=True)
    assert np.isfinite(d.real)


def test_derivative_geometry_guard():
    with pytest.raises(deeprf.ConfigurationError):
        deeprf.resolvent_derivative(lambda z: -1 / z, complex(-0.1), radius=0.2)


def test_dist_to_positive_axis():
    assert dist_to_positive_axis(complex(2.0, 0.5)) == 0.5
    assert dist_to_positive_axis(complex(-3.0, 4.0)) == 5.0


def test_chain_distance_contraction_property():
    # along the recursion, dist(-1/wcm_l, R+) >= dist(z_l, R+): the peeled
    # spectral parameters never collapse onto the positive axis
    co = deeprf.compute_coefficients(make_spec(3, (1.2, 0.8, 1.0), deeprf.tanh_scaled(2.0), 100))
    for z in (complex(-0.5, 0.0), complex(0.8, 0.4), complex(-1.5, -0.6)):
        st_ = deeprf.layer_recursion(co, 1.6, z)
        for l in range(1, 4):
            lhs = dist_to_positive_axis(-1.0 / st_.wcm[l])
            rhs = dist_to_positive_axis(st_.z[l])
            assert lhs >= rhs * (1 - 1e-9), (l, lhs, rhs)
