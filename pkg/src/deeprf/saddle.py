"""Saddle-point systems of the Gaussian covariate model.

The asymptotic behaviour of regularized empirical risk minimization on
jointly Gaussian covariates (Psi, Phi, Omega, theta_star) is captured by six
order parameters (V, q, m, Vhat, qhat, mhat) coupled through a channel side
(loss-dependent scalar integrals) and a matrix side (traces against the
covariance blocks):

    V = <Omega (lambda + Vhat Omega)^-1>
    q = <(qhat Omega + mhat^2 t t^T) Omega (lambda + Vhat Omega)^-2>
    m = sqrt(gamma/gamma_star) mhat <t t^T (lambda + Vhat Omega)^-1>

with t = Phi^T theta_star. The square channel has closed-form hat updates;
the logistic channel integrates its proximal map against a Gaussian measure.

Test errors: regression eps = rho + q - 2m, classification
eps = arccos(m / sqrt(rho q)) / pi.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np
from scipy.special import erf as _erf, expit as _sigmoid

from .exceptions import ConfigurationError, DegenerateVarianceError, SolverError
from .lincov import CovarianceSet
from .quadrature import standard_normal_nodes
from .rmt import SpectralMeasure

SADDLE_TOL = 1e-8
MAX_ITER = 10_000
DAMPING = 0.7
INIT = (1.0, 0.5, 0.1)
PROX_TOL = 1e-12


@dataclass
class SaddleState:
    V: float
    q: float
    m: float
    Vhat: float
    qhat: float
    mhat: float
    rho: float
    iterations: int
    residual: float


# --------------------------------------------------------------------------
# scalar channel machinery
# --------------------------------------------------------------------------


def logistic_prox(y: float, omega: float, V: float):
    """Solve f = y / (1 + exp(y (V f + omega))) and return (f, df/domega).

    With g = y*f in (0, 1) the equation is g = sigmoid(-(V g + y omega)),
    strictly monotone, solved by safeguarded Newton to |residual| < 1e-12.
    The omega-derivative follows by implicit differentiation,
    df/domega = -g(1-g) / (1 + V g(1-g)).
    """
    if V < 0:
        raise ConfigurationError("V must be non-negative")
    f, df = _logistic_prox_vec(float(y), np.array([float(omega)]), float(V))
    return float(f[0]), float(df[0])


def _logistic_prox_vec(y: float, omega: np.ndarray, V: float):
    yw = y * omega
    if V == 0.0:
        g = _sigmoid(-yw)
    else:
        # g = sigmoid(-(V g + y omega)): phi(g) = g - sigmoid strictly increases,
        # Newton with a [0, 1] bisection safeguard
        lo = np.zeros_like(yw)
        hi = np.ones_like(yw)
        g = _sigmoid(-yw / (1.0 + V))
        for _ in range(200):
            s = _sigmoid(-(V * g + yw))
            phi = g - s
            hi = np.where(phi > 0, g, hi)
            lo = np.where(phi < 0, g, lo)
            if np.max(np.abs(phi)) < 0.1 * PROX_TOL:
                break
            gn = g - phi / (1.0 + V * s * (1.0 - s))
            outside = (gn <= lo) | (gn >= hi)
            g = np.where(outside, 0.5 * (lo + hi), gn)
        resid = np.abs(g - _sigmoid(-(V * g + yw)))  # |f - y/(1+e^{y(Vf+w)})|
        if np.max(resid) > PROX_TOL:
            raise SolverError("logistic proximal solve above tolerance",
                              residual=float(np.max(resid)))
    f = y * g
    # dF/domega with F(f,w)=f(1+E)-y, E=e^{y(Vf+w)}: at the root E=(1-g)/g,
    # so df/domega = -g(1-g)/(1+Vg(1-g)) for either label
    df = -g * (1.0 - g) / (1.0 + V * g * (1.0 - g))
    return f, df


def _z_label(y: float, omega: np.ndarray, variance: float) -> np.ndarray:
    """Z(y, omega, V) = P(y h > 0) for h ~ N(omega, V): the label likelihood."""
    return 0.5 * (1.0 + _erf(y * omega / np.sqrt(2.0 * variance)))


def _dz_label(y: float, omega: np.ndarray, variance: float) -> np.ndarray:
    """Closed-form d/domega of Z: y exp(-omega^2/(2V)) / sqrt(2 pi V)."""
    return y * np.exp(-(omega**2) / (2.0 * variance)) / np.sqrt(2.0 * np.pi * variance)


def gaussian_channel_integrals(rho: float, q: float, m: float, V: float,
                               order: int = 201):
    """The three logistic-channel Gaussian integrals (no alpha/gamma factors).

    Returns (I_V, I_q, I_m) with
      I_V = E_xi sum_y Z(y, m/sqrt(q) xi, rho - m^2/q) d_omega f(y, sqrt(q) xi, V)
      I_q = E_xi sum_y Z(...) f(...)^2
      I_m = E_xi sum_y d_omega Z(...) f(...)
    The conditional variance rho - m^2/q must be positive.
    """
    if q <= 0:
        raise ConfigurationError("q must be positive for the channel integrals")
    variance = rho - m**2 / q
    if variance <= 0:
        raise DegenerateVarianceError(
            f"conditional variance rho - m^2/q = {variance:.3e} <= 0"
        )
    xi, wts = standard_normal_nodes(order)
    omega_z = (m / np.sqrt(q)) * xi
    omega_f = np.sqrt(q) * xi
    iv = iq = im = 0.0
    for y in (1.0, -1.0):
        z = _z_label(y, omega_z, variance)
        dz = _dz_label(y, omega_z, variance)
        f, df = _logistic_prox_vec(y, omega_f, V)
        iv += float(wts @ (z * df))
        iq += float(wts @ (z * f**2))
        im += float(wts @ (dz * f))
    return iv, iq, im


class SquareChannel:
    """Closed-form hat updates of the square loss.

    Label noise enters as rho -> rho + delta inside qhat only; the reported
    error stays the noiseless-test convention.
    """

    kind = "square"

    def __init__(self, delta: float = 0.0):
        if delta < 0:
            raise ConfigurationError("label noise must be >= 0")
        self.delta = float(delta)

    def hats(self, V, q, m, rho, alpha, gamma, gamma_star):
        vhat = alpha / (gamma * (1.0 + V))
        qhat = alpha * (rho + self.delta + q - 2.0 * m) / (gamma * (1.0 + V) ** 2)
        mhat = alpha / (np.sqrt(gamma * gamma_star) * (1.0 + V))
        return vhat, qhat, mhat


class LogisticChannel:
    kind = "logistic"

    def __init__(self, order: int = 201):
        self.order = order

    def hats(self, V, q, m, rho, alpha, gamma, gamma_star):
        q_eff = max(q, 1e-12)
        m_eff = m
        cap = np.sqrt(q_eff * rho * (1.0 - 1e-10))
        if abs(m_eff) > cap:  # overlap saturation: clamp into the feasible cone
            m_eff = np.sign(m_eff) * cap
        iv, iq, im = gaussian_channel_integrals(rho, q_eff, m_eff, max(V, 0.0), self.order)
        vhat = -alpha / gamma * iv
        qhat = alpha / gamma * iq
        mhat = alpha / np.sqrt(gamma * gamma_star) * im
        return vhat, qhat, mhat


# --------------------------------------------------------------------------
# matrix side
# --------------------------------------------------------------------------


class _EigenTraces:
    """Trace updates from one eigendecomposition of Omega.

    theta_star = None averages the readout over N(0, I): every trace against
    t t^T (t = Phi^T theta) becomes a trace against Phi^T Phi.
    """

    def __init__(self, cov: CovarianceSet):
        self.gamma_ratio = np.sqrt(cov.k / cov.k_star)
        self.k = cov.k
        evals, vecs = np.linalg.eigh(cov.omega)
        self.d = np.maximum(evals, 0.0)
        if cov.theta_star is not None:
            t = vecs.T @ (cov.phi.T @ cov.theta_star)
            self.t2 = t**2
        else:
            pv = cov.phi @ vecs
            self.t2 = np.einsum("ij,ij->j", pv, pv)

    def update(self, lam, vhat, qhat, mhat):
        den = lam + vhat * self.d
        V = float(np.mean(self.d / den))
        q = float(np.mean((qhat * self.d + mhat**2 * self.t2) * self.d / den**2))
        m = float(self.gamma_ratio * mhat * np.mean(self.t2 / den))
        return V, q, m


class _MatchedSpectralTraces:
    """Matched averaged-readout traces straight from a population resolvent.

    With Psi = Phi = Omega and theta theta^T -> I, every trace reduces to
    s(zeta) = <(Omega - zeta)^-1> and s'(zeta) at zeta = -lambda/Vhat plus
    the first moment of Omega.
    """

    def __init__(self, measure: SpectralMeasure, mean: float, gamma: float):
        self.s = measure.resolvent
        self.mean = float(mean)
        self.gamma_ratio = 1.0
        if measure.is_atomic:
            self._sprime = lambda z: complex(np.sum(measure.w / (measure.x - z) ** 2))
        else:
            def _sprime(z, h_rel=1e-6):
                h = abs(z) * h_rel
                d1 = (self.s(z + h) - self.s(z - h)) / (2 * h)
                d2 = (self.s(z + h / 2) - self.s(z - h / 2)) / h
                return (4 * d2 - d1) / 3

            self._sprime = _sprime

    def update(self, lam, vhat, qhat, mhat):
        zeta = -lam / vhat
        s = complex(self.s(zeta)).real
        sp = complex(self._sprime(zeta)).real
        V = (1.0 + zeta * s) / vhat
        t_q2 = (1.0 + 2.0 * zeta * s + zeta**2 * sp) / vhat**2  # <Om^2 R^2>
        t_q3 = (self.mean + 2.0 * zeta + 3.0 * zeta**2 * s + zeta**3 * sp) / vhat**2
        t_m = (self.mean + zeta + zeta**2 * s) / vhat  # <Om^2 R>
        q = qhat * t_q2 + mhat**2 * t_q3
        m = mhat * t_m
        return float(V), float(q), float(m)


# --------------------------------------------------------------------------
# the solver
# --------------------------------------------------------------------------


def _iterate(traces, channel, rho, alpha, gamma, gamma_star, lam,
             damping, tol, max_iter, init):
    V, q, m = init
    it = 0
    snapshots = []
    for it in range(1, max_iter + 1):
        vhat, qhat, mhat = channel.hats(V, q, m, rho, alpha, gamma, gamma_star)
        Vn, qn, mn = traces.update(lam, vhat, qhat, mhat)
        drift = max(abs(Vn - V), abs(qn - q), abs(mn - m))
        V = damping * Vn + (1.0 - damping) * V
        q = damping * qn + (1.0 - damping) * q
        m = damping * mn + (1.0 - damping) * m
        q = max(q, 1e-14)
        if drift < tol:
            break
        if it % 50 == 0:
            # slow linear convergence near the interpolation peaks: Aitken
            # delta-squared on chunk snapshots (geometric tail extrapolation)
            snapshots.append(np.array([V, q, m]))
            if len(snapshots) == 3:
                s0, s1, s2 = snapshots
                d2, d1 = s2 - s1, s1 - s0
                den = d2 - d1
                ok = (np.abs(den) > 1e-300) & (np.abs(d2) < np.abs(d1))
                cand = np.where(ok, s2 - d2**2 / np.where(np.abs(den) > 1e-300, den, 1.0), s2)
                if np.all(np.isfinite(cand)) and cand[0] > 0 and cand[1] > 0:
                    V, q, m = float(cand[0]), float(cand[1]), float(cand[2])
                snapshots = snapshots[-2:]
    else:
        raise SolverError("saddle-point iteration did not converge",
                          residual=drift, iterations=max_iter)
    vhat, qhat, mhat = channel.hats(V, q, m, rho, alpha, gamma, gamma_star)
    Vn, qn, mn = traces.update(lam, vhat, qhat, mhat)
    residual = max(abs(Vn - V), abs(qn - q), abs(mn - m))
    return SaddleState(V, q, m, vhat, qhat, mhat, rho, it, residual)


def solve_saddle(
    cov: CovarianceSet,
    alpha: float,
    lam: float,
    channel,
    damping: float = DAMPING,
    tol: float = SADDLE_TOL,
    max_iter: int = MAX_ITER,
    init=INIT,
    validate: bool = False,
) -> SaddleState:
    """Fixed point of the six order-parameter equations for finite matrices.

    gamma and gamma_star are inferred from the block shapes relative to the
    nominal input dimension recorded in cov.meta (falls back to k/k_star
    ratios against d = k / gamma when absent: callers built through
    build_covariance_set always carry them).
    """
    if lam <= 0 or alpha <= 0:
        raise ConfigurationError("need lambda > 0 and alpha > 0")
    if validate:
        cov.validate()
    d = (cov.meta or {}).get("d")
    if d is None:
        raise ConfigurationError("CovarianceSet.meta must record the input dimension d")
    gamma = cov.k / d
    gamma_star = cov.k_star / d
    traces = _EigenTraces(cov)
    return _iterate(traces, channel, cov.rho, alpha, gamma, gamma_star, lam,
                    damping, tol, max_iter, init)


def solve_saddle_matched_spectral(
    measure: SpectralMeasure,
    mean: float,
    alpha: float,
    gamma: float,
    lam: float,
    channel,
    damping: float = DAMPING,
    tol: float = SADDLE_TOL,
    max_iter: int = MAX_ITER,
    init=INIT,
) -> SaddleState:
    """Matched averaged-readout saddle driven by a limiting spectrum.

    This is the d-free theory route: feed it the population resolvent of
    Omega_lin^L and its normalized trace; rho = mean.
    """
    traces = _MatchedSpectralTraces(measure, mean, gamma)
    return _iterate(traces, channel, mean, alpha, gamma, gamma, lam,
                    damping, tol, max_iter, init)


def sweep_to_csv(cov: CovarianceSet, alphas, lam: float, channel, out_path,
                 warm_start: bool = True) -> list[SaddleState]:
    """Solve a whole sample-ratio sweep and dump the order parameters.

    Columns: alpha, V, q, m, Vhat, qhat, mhat, eps, iterations, residual.
    Serial warm starts along the grid are the default (helpful near peaks).
    """
    import csv

    states = []
    init = INIT
    err = classification_error if getattr(channel, "kind", "") == "logistic" else regression_error
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "V", "q", "m", "Vhat", "qhat", "mhat", "eps",
                    "iterations", "residual"])
        for alpha in alphas:
            st = solve_saddle(cov, float(alpha), lam, channel, init=init)
            if warm_start:
                init = (st.V, st.q, st.m)
            states.append(st)
            w.writerow([alpha, st.V, st.q, st.m, st.Vhat, st.qhat, st.mhat,
                        err(st), st.iterations, st.residual])
    return states


def regression_error(state: SaddleState, include_label_noise: float = 0.0) -> float:
    """Mean squared error rho + q - 2m (noiseless test labels by default)."""
    return float(state.rho + state.q - 2.0 * state.m + include_label_noise)


def classification_error(state: SaddleState) -> float:
    """Misclassification probability arccos(m/sqrt(rho q))/pi; 0.5 when q=0."""
    if state.q <= 0 or state.rho <= 0:
        return 0.5
    arg = np.clip(state.m / np.sqrt(state.rho * state.q), -1.0, 1.0)
    return float(np.arccos(arg) / np.pi)
