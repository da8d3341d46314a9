"""Finite-size Monte Carlo: data generation, readout training, empirical errors.

Everything here is a pure function of (spec, seeds): inputs, weights, label
noise and test data draw from separate Philox substreams, so re-runs are
bitwise identical and independent pieces can be regenerated in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .arch import ArchitectureSpec, SampledNetwork
from .exceptions import ConfigurationError, SolverError
from .rng import stream

TEST_SET_FACTOR = 10
TEST_SET_CAP = 100_000
RIDGE_RESIDUAL_TOL = 1e-10
LOGISTIC_GRAD_TOL = 1e-8
LOGISTIC_MAX_NEWTON = 500


def sample_inputs(spec: ArchitectureSpec, n: int, seed: int, tag) -> np.ndarray:
    """d x n input matrix with columns ~ N(0, Omega_0)."""
    g = stream(seed, tag)
    x = g.standard_normal((spec.d, n))
    if spec.omega0 is not None:
        evals, vecs = np.linalg.eigh(spec.omega0)
        root = vecs * np.sqrt(np.maximum(evals, 0.0))
        x = root @ (vecs.T @ x)
    return x


def propagate_features(network: SampledNetwork, x0: np.ndarray) -> np.ndarray:
    """Push inputs through every frozen layer: X_l = sigma_l(W_l X_{l-1}/sqrt(k_{l-1}))."""
    widths = network.spec.widths
    x = x0
    for l, W in enumerate(network.weights, start=1):
        x = network.spec.activations[l - 1](W @ x / np.sqrt(widths[l - 1]))
    return x


def target_values(target: SampledNetwork, theta_star: np.ndarray, x0: np.ndarray,
                  readout=None) -> np.ndarray:
    """sigma_star(theta^T phi_star(x)/sqrt(k_star)) for each column of x0."""
    feats = propagate_features(target, x0)
    k_star = feats.shape[0]
    raw = theta_star @ feats / np.sqrt(k_star)
    return raw if readout is None else readout(raw)


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray      # k_L x n learner post-activations
    y: np.ndarray             # training labels (noise included)
    features_test: np.ndarray
    y_test: np.ndarray        # test labels with the same noise convention
    f_test: np.ndarray        # noiseless target values on the test inputs
    delta: float
    seed: int


def generate(
    learner: SampledNetwork,
    target: SampledNetwork,
    theta_star: np.ndarray,
    n: int,
    delta: float,
    seed: int,
    readout=None,
    n_test: int | None = None,
) -> Dataset:
    """Draw a train/test dataset through the two sampled networks.

    ``readout`` maps the target preactivation to labels (identity for
    regression, sign for classification); Gaussian label noise of variance
    ``delta`` is added only when the readout is the identity.
    """
    if learner.spec.d != target.spec.d:
        raise ConfigurationError("learner and target must share the input dimension")
    if n_test is None:
        n_test = min(TEST_SET_FACTOR * max(n, learner.spec.d), TEST_SET_CAP)
    x_train = sample_inputs(learner.spec, n, seed, "train-inputs")
    x_test = sample_inputs(learner.spec, n_test, seed, "test-inputs")
    f_train = target_values(target, theta_star, x_train, readout)
    f_test = target_values(target, theta_star, x_test, readout)
    y_train, y_test = f_train, f_test
    if delta > 0:
        if readout is not None:
            raise ConfigurationError("label noise is only defined for the identity readout")
        g = stream(seed, "label-noise")
        y_train = f_train + np.sqrt(delta) * g.standard_normal(n)
        y_test = f_test + np.sqrt(delta) * g.standard_normal(n_test)
    return Dataset(
        propagate_features(learner, x_train),
        y_train,
        propagate_features(learner, x_test),
        y_test,
        f_test,
        float(delta),
        seed,
    )


@dataclass(frozen=True, eq=False)
class FitResult:
    theta_hat: np.ndarray
    train_error: float
    iterations: int
    grad_norm: float


def fit_ridge(dataset: Dataset, lam: float) -> FitResult:
    """Closed-form ridge readout theta = (lam + X X^T/k)^-1 X y / sqrt(k)."""
    if lam <= 0:
        raise ConfigurationError("ridge needs lambda > 0")
    X, y = dataset.features, dataset.y
    k = X.shape[0]
    gram = X @ X.T / k + lam * np.eye(k)
    rhs = X @ y / np.sqrt(k)
    theta = cho_solve(cho_factor(gram, lower=True), rhs)
    resid = np.linalg.norm(gram @ theta - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if resid > RIDGE_RESIDUAL_TOL:
        raise SolverError("ridge normal equations solved above tolerance", residual=resid)
    pred = theta @ X / np.sqrt(k)
    return FitResult(theta, float(np.mean((dataset.y - pred) ** 2)), 1, float(resid))


def _logistic_objective(theta, Z, y, lam):
    margins = y * (theta @ Z)
    return float(np.sum(np.logaddexp(0.0, -margins)) + 0.5 * lam * theta @ theta)


def fit_logistic(dataset: Dataset, lam: float) -> FitResult:
    """Newton with Armijo backtracking on the regularized logistic risk."""
    if lam <= 0:
        raise ConfigurationError("logistic needs lambda > 0 for strict convexity")
    X, y = dataset.features, dataset.y
    k, n = X.shape
    Z = X / np.sqrt(k)
    theta = np.zeros(k)
    for it in range(1, LOGISTIC_MAX_NEWTON + 1):
        margins = y * (theta @ Z)
        p = 1.0 / (1.0 + np.exp(np.clip(margins, -500, 500)))  # sigmoid(-margin)
        grad = -Z @ (y * p) + lam * theta
        gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
        if gnorm < LOGISTIC_GRAD_TOL:
            return FitResult(theta, _logistic_objective(theta, Z, y, lam) / max(n, 1), it, gnorm)
        w = p * (1.0 - p)
        hess = (Z * w) @ Z.T + lam * np.eye(k)
        step = cho_solve(cho_factor(hess, lower=True), grad)
        # Armijo backtracking along -step
        f0 = _logistic_objective(theta, Z, y, lam)
        slope = float(grad @ step)
        t = 1.0
        while t > 1e-12:
            cand = theta - t * step
            if _logistic_objective(cand, Z, y, lam) <= f0 - 1e-4 * t * slope:
                break
            t /= 2.0
        theta = theta - t * step
    raise SolverError("logistic Newton exceeded its iteration cap",
                      residual=gnorm, iterations=LOGISTIC_MAX_NEWTON)


def predict(fit: FitResult, features: np.ndarray) -> np.ndarray:
    k = features.shape[0]
    return fit.theta_hat @ features / np.sqrt(k)


def empirical_error(fit: FitResult, dataset: Dataset, metric: str):
    """Plug-in test error with its standard error over test points.

    metric "mse" compares against the dataset's y_test (noise convention of
    the generator); "mse_clean" against the noiseless target values;
    "misclassification" scores sign disagreement.
    """
    pred = predict(fit, dataset.features_test)
    if dataset.y_test.size == 0:
        raise ConfigurationError("empty test set")
    if metric == "mse":
        vals = (dataset.y_test - pred) ** 2
    elif metric == "mse_clean":
        vals = (dataset.f_test - pred) ** 2
    elif metric == "misclassification":
        vals = (dataset.y_test * pred <= 0).astype(float)
    else:
        raise ConfigurationError(f"unknown metric {metric!r}")
    return float(np.mean(vals)), float(np.std(vals) / np.sqrt(vals.size))


def empirical_spectrum(
    source: str,
    network: SampledNetwork,
    n_samples: int,
    seed: int,
    chunk: int = 10_000,
):
    """Eigenvalues of a feature matrix, as a uniform atomic measure.

    source "sample_covariance": X X^T / n_samples accumulated in chunks
    (the population estimate); "gram": X X^T / k_L on a single draw.
    """
    from .rmt import SpectralMeasure  # late import to keep sim standalone

    spec = network.spec
    k = spec.k_out
    if source == "gram":
        x0 = sample_inputs(spec, n_samples, seed, "spectrum-inputs")
        feats = propagate_features(network, x0)
        mat = feats @ feats.T / k
    elif source in ("sample_covariance", "population_mc"):
        if n_samples < k:
            raise ConfigurationError("need n_samples >= feature dimension")
        mat = np.zeros((k, k))
        gen = stream(seed, "spectrum-inputs")
        root = None
        if spec.omega0 is not None:
            evals, vecs = np.linalg.eigh(spec.omega0)
            root = (vecs * np.sqrt(np.maximum(evals, 0.0))) @ vecs.T
        done = 0
        while done < n_samples:
            m = min(chunk, n_samples - done)
            # sample-major draw keeps the stream independent of chunk size
            x0 = gen.standard_normal((m, spec.d)).T
            if root is not None:
                x0 = root @ x0
            feats = propagate_features(network, x0)
            mat += feats @ feats.T
            done += m
        mat /= n_samples
    else:
        raise ConfigurationError(f"unknown spectrum source {source!r}")
    return SpectralMeasure.from_atoms(np.linalg.eigvalsh(mat))


def sample_gcm_features(
    cov, n: int, seed: int, tag="gcm"
) -> tuple[np.ndarray, np.ndarray]:
    """Jointly Gaussian (target, learner) features with the given covariance.

    Returns (u: k_star x n, v: k x n); used for the Gaussian-equivalence
    comparisons of the learning curves.
    """
    joint = np.block([[cov.psi, cov.phi], [cov.phi.T, cov.omega]])
    evals, vecs = np.linalg.eigh(joint)
    root = vecs * np.sqrt(np.maximum(evals, 0.0))
    g = stream(seed, tag)
    z = root @ g.standard_normal((joint.shape[0], n))
    return z[: cov.k_star], z[cov.k_star :]
