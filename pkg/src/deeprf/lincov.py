"""Linearized covariances of network post-activations.

Propagating a Gaussian input through a random layer multiplies its covariance
by the linear gain kappa1^2 and adds isotropic noise kappastar^2:

    Omega_{l+1} = kappa1_{l+1}^2 * W_{l+1} Omega_l W_{l+1}^T / k_l
                  + kappastar_{l+1}^2 * I

with Omega_0 the input covariance. The same recursion with the target
network's starred quantities gives Psi, and the cross-covariance Phi is the
product of the two networks' effective linear maps around Omega_0. These
matrices are the second-order statistics of the equivalent Gaussian
covariate model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matio
from .arch import GECoefficients, SampledNetwork
from .exceptions import ConfigurationError

PSD_TOL = 1e-9
IDENTITY_TOL = 1e-10


def omega_lin(network: SampledNetwork, coeffs: GECoefficients) -> list[np.ndarray]:
    """The sequence Omega_lin^0 .. Omega_lin^L for one sampled network."""
    if coeffs.depth != network.spec.depth:
        raise ConfigurationError("coefficients do not match network depth")
    ws = network.spec.widths
    out = [network.spec.omega0_matrix()]
    for l, W in enumerate(network.weights, start=1):
        prev = out[-1]
        k1sq = coeffs.kappa1[l - 1] ** 2
        ksq = coeffs.kappa_star[l - 1] ** 2
        om = k1sq * (W @ prev @ W.T) / ws[l - 1] + ksq * np.eye(ws[l])
        out.append(0.5 * (om + om.T))
    return out


def psi_lin(target_network: SampledNetwork, target_coeffs: GECoefficients) -> np.ndarray:
    """Target-feature covariance; depth 0 returns Omega_0 itself."""
    return omega_lin(target_network, target_coeffs)[-1]


def _effective_map(network: SampledNetwork, coeffs: GECoefficients) -> np.ndarray:
    """Product of kappa1_l W_l / sqrt(fan-in), mapping R^d -> R^{k_L}."""
    ws = network.spec.widths
    A = np.eye(network.spec.d)
    for l, W in enumerate(network.weights, start=1):
        A = coeffs.kappa1[l - 1] * (W @ A) / np.sqrt(ws[l - 1])
    return A


def phi_lin(
    target_network: SampledNetwork,
    learner_network: SampledNetwork,
    target_coeffs: GECoefficients,
    learner_coeffs: GECoefficients,
) -> np.ndarray:
    """Cross-covariance Phi (k_star x k_L) of target and learner features.

    Each weight factor carries 1/sqrt(fan-in); with a depth-0 target the
    left product is the identity on R^d.
    """
    if target_network.spec.d != learner_network.spec.d:
        raise ConfigurationError("target and learner must share the input dimension")
    om0_t = target_network.spec.omega0_matrix()
    om0_l = learner_network.spec.omega0_matrix()
    if not np.array_equal(om0_t, om0_l):
        raise ConfigurationError("target and learner must share omega0")
    A_star = _effective_map(target_network, target_coeffs)
    A = _effective_map(learner_network, learner_coeffs)
    return A_star @ om0_t @ A.T


def trace_omega(coeffs: GECoefficients, trace_omega0_over_d: float = 1.0) -> float:
    """Normalized trace of Omega_lin^L in closed form.

    <Omega_L> = sum_{l<L} kstar_l^2 prod_{l'>l} k1_{l'}^2 Delta_{l'}
                + kstar_L^2 + (tr Omega_0/d) prod_l k1_l^2 Delta_l
    (depth 0 returns tr Omega_0/d).
    """
    if coeffs.depth == 0:
        return float(trace_omega0_over_d)
    a = coeffs.a_coeffs()
    b = coeffs.b_coeffs()
    total = b[-1]
    for l in range(coeffs.depth - 1):
        total += b[l] * float(np.prod(a[l + 1 :]))
    return float(total + trace_omega0_over_d * np.prod(a))


def noise_trace(coeffs: GECoefficients) -> float:
    """Asymptotic tr(C_xi^L)/k_L: trace_omega minus the signal term."""
    if coeffs.depth == 0:
        return 0.0
    return trace_omega(coeffs, 0.0)


@dataclass(frozen=True, eq=False)
class EffectiveLinearModel:
    """Signal-plus-noise reduction of a sampled network.

    a_matrix maps inputs to the last layer, noise_cov is the covariance of
    the accumulated layer noise; A Omega_0 A^T + C equals Omega_lin^L.
    """

    a_matrix: np.ndarray
    noise_cov: np.ndarray
    noise_level: float


def effective_linear(network: SampledNetwork, coeffs: GECoefficients) -> EffectiveLinearModel:
    if network.spec.depth < 1:
        raise ConfigurationError("effective linear model needs depth >= 1")
    ws = network.spec.widths
    kL = ws[-1]
    A = _effective_map(network, coeffs)
    C = coeffs.kappa_star[-1] ** 2 * np.eye(kL)
    for l0 in range(1, network.spec.depth):
        # P maps R^{k_{l0}} -> R^{k_L}: the tail product of later layers
        P = np.eye(ws[l0])
        for l in range(l0 + 1, network.spec.depth + 1):
            P = coeffs.kappa1[l - 1] * (network.weights[l - 1] @ P) / np.sqrt(ws[l - 1])
        C += coeffs.kappa_star[l0 - 1] ** 2 * (P @ P.T)
    C = 0.5 * (C + C.T)
    return EffectiveLinearModel(A, C, float(np.trace(C) / kL))


def check_psd(matrix: np.ndarray, tol: float = PSD_TOL) -> None:
    evs = np.linalg.eigvalsh(matrix)
    scale = max(abs(evs[0]), abs(evs[-1]), 1e-300)
    if evs[0] < -tol * scale:
        raise ConfigurationError(
            f"matrix not PSD: min eigenvalue {evs[0]:.3e} at scale {scale:.3e}"
        )


@dataclass(frozen=True, eq=False)
class CovarianceSet:
    """The Gaussian-covariate-model data: (Psi, Phi, Omega, theta_star, rho).

    ``theta_star=None`` selects the readout-averaged convention: every trace
    against theta theta^T is replaced by its N(0, I) expectation, and rho is
    the normalized trace of Psi.
    """

    omega: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    theta_star: np.ndarray | None
    rho: float
    meta: dict | None = None

    def __post_init__(self):
        k_star, k = self.phi.shape
        if self.omega.shape != (k, k) or self.psi.shape != (k_star, k_star):
            raise ConfigurationError("covariance block shapes are inconsistent")
        if self.theta_star is not None and self.theta_star.shape != (k_star,):
            raise ConfigurationError("theta_star must have length k_star")
        if self.rho <= 0:
            raise ConfigurationError("rho must be positive")

    @property
    def k(self) -> int:
        return self.omega.shape[0]

    @property
    def k_star(self) -> int:
        return self.psi.shape[0]

    def validate(self, tol: float = PSD_TOL) -> None:
        check_psd(self.omega, tol)
        check_psd(self.psi, tol)
        joint = np.block([[self.psi, self.phi], [self.phi.T, self.omega]])
        check_psd(joint, tol)

    def save(self, directory, **meta) -> None:
        mats = {"omega": self.omega, "psi": self.psi, "phi": self.phi}
        if self.theta_star is not None:
            mats["theta_star"] = self.theta_star[None, :]
        matio.write_bundle(
            directory,
            mats,
            {"rho": self.rho, "k": self.k, "k_star": self.k_star, **(self.meta or {}), **meta},
        )

    @classmethod
    def load(cls, directory) -> "CovarianceSet":
        mats, meta = matio.read_bundle(directory)
        theta = mats.get("theta_star")
        return cls(
            omega=mats["omega"],
            psi=mats["psi"],
            phi=mats["phi"],
            theta_star=None if theta is None else theta.ravel(),
            rho=float(meta["rho"]),
            meta=meta,
        )


def build_covariance_set(
    learner_network: SampledNetwork,
    learner_coeffs: GECoefficients,
    target_network: SampledNetwork,
    target_coeffs: GECoefficients,
    theta_star: np.ndarray | None,
) -> CovarianceSet:
    omega = omega_lin(learner_network, learner_coeffs)[-1]
    psi = psi_lin(target_network, target_coeffs)
    phi = phi_lin(target_network, learner_network, target_coeffs, learner_coeffs)
    k_star = psi.shape[0]
    if theta_star is None:
        rho = float(np.trace(psi) / k_star)
    else:
        theta_star = np.asarray(theta_star, dtype=float)
        rho = float(theta_star @ psi @ theta_star / k_star)
    return CovarianceSet(omega, psi, phi, theta_star, rho,
                         meta={"d": learner_network.spec.d,
                               "learner_seed": learner_network.seed,
                               "target_seed": target_network.seed})
