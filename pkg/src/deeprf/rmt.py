"""Self-consistent spectral transforms for deep random features.

Three related objects live here.

* :func:`mp_selfconsistent` solves the scalar Marchenko-Pastur-type equation

      1 - c + z*m + c * <(Sigma m + 1)^-1> = 0

  for the Gram-side trace of a sample covariance problem with population
  measure mu(Sigma) and aspect ratio c = dimension/samples.

* :func:`layer_recursion` peels a depth-L network layer by layer: each layer
  is one free multiplicative convolution with an MP factor, linked to the one
  below through the change of spectral parameter

      -1/c_l = wcm_l * z_l * a_l,     z_{l-1} = c_l z_l - b_l/a_l

  (a_l = Delta_l kappa1_l^2, b_l = kappastar_l^2). The bottom of the chain is
  the input-data Gram measure: for Gaussian inputs it is mu(Omega_0) boxtimes
  MP^{d/n}; an explicit ``input_gram`` overrides it for general designs.

* :class:`PopulationResolvent` / :func:`density_scheme` solve the companion
  recursion for the spectrum of the population covariance Omega_lin^L (the
  two-array scheme with a closed quadratic update per layer).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .arch import GECoefficients
from .exceptions import ConfigurationError, SolverError

DEFAULT_TOL = 1e-12
CHAIN_TOL = 1e-11
MAX_ITER = 10_000
DAMPING = 0.5
MIN_DIST = 1e-12


def dist_to_positive_axis(z: complex) -> float:
    z = complex(z)
    if z.real >= 0.0:
        return abs(z.imag)
    return abs(z)


def _require_off_axis(z: complex, what: str = "spectral parameter") -> complex:
    z = complex(z)
    if dist_to_positive_axis(z) < MIN_DIST:
        raise ConfigurationError(f"{what} {z} is too close to the positive real axis")
    return z


class SpectralMeasure:
    """A spectrum given either as weighted atoms or as a trace-resolvent.

    ``resolvent(z)`` returns m(z) = integral of 1/(x - z) against the measure;
    the Nevanlinna property (Im m * Im z >= 0, m -> -1/z) is what the solvers
    rely on.
    """

    def __init__(self, atoms=None, resolvent_fn: Callable | None = None, mean: float | None = None):
        if (atoms is None) == (resolvent_fn is None):
            raise ConfigurationError("provide exactly one of atoms or resolvent_fn")
        self._fn = resolvent_fn
        self._mean = mean
        if atoms is not None:
            x, w = atoms
            x = np.asarray(x, dtype=float).ravel()
            w = np.asarray(w, dtype=float).ravel()
            if x.shape != w.shape or x.size == 0:
                raise ConfigurationError("atoms need matching positions and weights")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-8:
                raise ConfigurationError("atom weights must be a probability vector")
            if np.any(x < -1e-12):
                raise ConfigurationError("atom positions must be non-negative")
            self.x, self.w = np.maximum(x, 0.0), w / w.sum()
        else:
            self.x = self.w = None

    # --- constructors -----------------------------------------------------
    @classmethod
    def from_atoms(cls, positions, weights=None) -> "SpectralMeasure":
        positions = np.asarray(positions, dtype=float).ravel()
        if weights is None:
            weights = np.full(positions.size, 1.0 / positions.size)
        return cls(atoms=(positions, weights))

    @classmethod
    def point(cls, position: float) -> "SpectralMeasure":
        return cls.from_atoms([position], [1.0])

    @classmethod
    def from_matrix(cls, matrix) -> "SpectralMeasure":
        return cls.from_atoms(np.linalg.eigvalsh(matrix))

    @classmethod
    def from_callable(cls, fn: Callable, mean: float | None = None) -> "SpectralMeasure":
        return cls(resolvent_fn=fn, mean=mean)

    # --- queries ------------------------------------------------------------
    @property
    def is_atomic(self) -> bool:
        return self.x is not None

    def mean(self) -> float:
        if self.is_atomic:
            return float(self.w @ self.x)
        if self._mean is None:
            raise ConfigurationError("callable measure with unknown mean")
        return self._mean

    def resolvent(self, z: complex) -> complex:
        if self.is_atomic:
            return complex(np.sum(self.w / (self.x - z)))
        return complex(self._fn(z))

    def inv_one_plus(self, m: complex) -> complex:
        """<(Sigma m + 1)^-1> for the scalar self-consistent equation."""
        if self.is_atomic:
            return complex(np.sum(self.w / (self.x * m + 1.0)))
        if m == 0:
            return 1.0
        return self.resolvent(-1.0 / m) / m

    def scaled(self, a: float, shift: float = 0.0) -> "SpectralMeasure":
        """Push-forward under x -> a*x + shift."""
        if self.is_atomic:
            return SpectralMeasure.from_atoms(a * self.x + shift, self.w)
        fn = self._fn
        mean = None if self._mean is None else a * self._mean + shift
        return SpectralMeasure.from_callable(
            lambda z, a=a, shift=shift: fn((z - shift) / a) / a, mean
        )


@dataclass
class MPResult:
    m: complex
    residual: float
    iterations: int


def mp_selfconsistent(
    measure: SpectralMeasure,
    c: float,
    z: complex,
    w0: complex | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = MAX_ITER,
    damping: float = DAMPING,
) -> MPResult:
    """Unique Nevanlinna solution of 1 - c + z m = -c <(Sigma m + 1)^-1>.

    ``c`` is dimension/samples of the underlying sample covariance problem;
    the returned value is the Gram-side resolvent trace at z.
    """
    z = _require_off_axis(z)
    if c <= 0:
        raise ConfigurationError("aspect ratio must be positive")
    if measure.is_atomic and measure.x.size == 1:
        m = _mp_single_atom(float(measure.x[0]), c, z)
        res = abs(1.0 - c + z * m + c * measure.inv_one_plus(m)) / abs(z)
        return _mp_validate(MPResult(m, res, 0), z, tol * 10)
    if w0 is None:
        w0 = -1.0 / z
    m, res, it = _mp_solve_raw(measure, c, z, w0, damping, tol, max_iter)
    gate = max(tol * 10, 1e-10) if dist_to_positive_axis(z) > 1e-3 else 2e-6
    if res > gate:
        m, res, it2 = _mp_aitken(measure, c, z, m, damping, tol, gate)
        it += it2
    if res > gate:
        # eta continuation from high above the axis tracks the Nevanlinna
        # branch through edge flapping
        top = 0.5 * max(1.0, abs(z))
        m = -1.0 / complex(z.real, top)
        sign = 1.0 if z.imag >= 0 else -1.0
        for eta_k in np.geomspace(top, max(abs(z.imag), 1e-9), 25):
            zz = complex(z.real, sign * max(abs(z.imag), eta_k))
            m, res, _ = _mp_solve_raw(measure, c, zz, m, damping, tol, 2000)
        m, res, it2 = _mp_aitken(measure, c, z, m, damping, tol, gate)
        it += it2
    return _mp_validate(MPResult(complex(m), res, it), z, gate)


def _mp_solve_raw(measure, c, z, w0, damping, tol, max_iter):
    if measure.is_atomic:
        return _kernels.mp_fixed_point(
            measure.x, measure.w, float(c), complex(z), complex(w0), damping, tol, max_iter
        )
    return _mp_callable_loop(measure, c, z, w0, damping, tol, max_iter)


def _mp_aitken(measure, c, z, m0, damping, tol, gate, chunk=300, rounds=12):
    m = complex(m0)
    total = 0
    res = np.inf
    for _ in range(rounds):
        iterates = []
        for _ in range(3):
            m, res, it = _mp_solve_raw(measure, c, z, m, damping, tol, chunk)
            total += it
            if res < gate:
                return m, res, total
            iterates.append(m)
        m1, m2, m3 = iterates
        den = (m3 - m2) - (m2 - m1)
        if abs(den) > 1e-300:
            m = m3 - (m3 - m2) ** 2 / den
    return m, res, total


def _mp_single_atom(t: float, c: float, z: complex) -> complex:
    # (1 - c + z m)(t m + 1) = -c  =>  t z m^2 + (z + t(1-c)) m + 1 = 0
    if t == 0.0:
        return -1.0 / z
    A, B, C = t * z, z + t * (1.0 - c), 1.0
    disc = np.sqrt(complex(B * B - 4.0 * A * C))
    roots = ((-B + disc) / (2 * A), (-B - disc) / (2 * A))
    if z.imag != 0.0:
        picked = [r for r in roots if r.imag * z.imag > 0]
    else:
        picked = [r for r in roots if r.real > 0]
    if len(picked) != 1:
        # fall back to the far-field branch -1/z
        picked = [min(roots, key=lambda r: abs(r + 1.0 / z))]
    return picked[0]


def _mp_callable_loop(measure, c, z, w0, damping, tol, max_iter):
    # half-plane-preserving form: T(m) = int x/(1+x m) dmu = (1 - <(S m+1)^-1>)/m
    m = complex(w0)
    theta = damping
    prev_step = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        t = (1.0 - measure.inv_one_plus(m)) / m
        f = -1.0 / (z - c * t)
        step = abs(f - m)
        m = (1.0 - theta) * m + theta * f
        if step < tol:
            break
        if step > prev_step and it > 200:
            theta = 0.1
        prev_step = step
    res = abs(1.0 - c + z * m + c * measure.inv_one_plus(m)) / abs(z)
    return m, res, it


def _mp_validate(result: MPResult, z: complex, gate: float) -> MPResult:
    if result.residual > max(gate, 1e-10):
        raise SolverError(
            f"MP self-consistent equation did not converge at z={z}",
            residual=result.residual,
            iterations=result.iterations,
        )
    if z.imag != 0.0 and result.m.imag * z.imag < -1e-10:
        raise SolverError(f"non-Nevanlinna MP solution at z={z}", residual=result.residual)
    return result


def mp_mhat(measure: SpectralMeasure, c: float, z: complex, **kw) -> complex:
    """Stieltjes transform of mu boxtimes MP^c at z (sample-covariance side)."""
    m = mp_selfconsistent(measure, c, z, **kw).m
    return m / c + (1.0 - c) / (c * z)


# --------------------------------------------------------------------------
# layer recursion (deterministic equivalent of the feature Gram resolvents)
# --------------------------------------------------------------------------


@dataclass
class LayerRecursionState:
    """Converged chain: per-layer spectral parameters and resolvent traces.

    ``wcm[l]`` is the k_l-side trace of ((X_l X_l^T/k_l) - z_l)^{-1},
    ``gram[l]`` the n-side trace of ((X_l^T X_l/k_l) - z_l)^{-1}; at the
    solution gram[L] = c_1 ... c_L * gram[0].
    """

    z: list
    wcm: list
    c: list
    gram: list
    residuals: list
    iterations: int

    @property
    def wcm_top(self) -> complex:
        return self.wcm[-1]


def _gaussian_input_gram(omega0_measure: SpectralMeasure, alpha: float):
    """n-side trace of the data Gram resolvent for Gaussian inputs.

    g0(z) = (1/alpha) * m_gram(z/alpha) where m_gram solves the scalar
    equation for population mu(Omega_0) at ratio d/n = 1/alpha.
    """

    def g0(z, w0=None):
        res = mp_selfconsistent(omega0_measure, 1.0 / alpha, z / alpha, w0=w0)
        return res.m / alpha

    return g0


def layer_recursion(
    coeffs: GECoefficients,
    alpha: float,
    z: complex,
    omega0_measure: SpectralMeasure | None = None,
    input_gram: SpectralMeasure | None = None,
    tol: float = CHAIN_TOL,
    max_iter: int = MAX_ITER,
) -> LayerRecursionState:
    """Solve the full layer chain at spectral parameter ``z``.

    ``omega0_measure`` is the population spectrum of the input covariance
    (identity by default); ``input_gram`` instead fixes the empirical data
    Gram spectrum directly (e.g. a point mass for an exactly isotropic
    design) and bypasses the Gaussian-data convolution at the bottom.
    """
    z = _require_off_axis(z)
    if alpha <= 0:
        raise ConfigurationError("alpha must be positive")
    L = coeffs.depth
    a, b = coeffs.a_coeffs(), coeffs.b_coeffs()
    gammas = coeffs.gammas
    if input_gram is not None:
        bottom = lambda zz, w0=None: input_gram.resolvent(zz)
    else:
        om = omega0_measure or SpectralMeasure.point(1.0)
        bottom = _gaussian_input_gram(om, alpha)

    warm: dict = {}
    evals = 0

    def node(l: int, zl: complex):
        """Returns (wcm_l, gram_l) at spectral parameter zl."""
        nonlocal evals
        _require_off_axis(zl, f"layer-{l} parameter")
        if l == 0:
            g = bottom(zl, warm.get("g0"))
            warm["g0"] = g * alpha if input_gram is None else None
            return None, g
        cr = alpha / gammas[l - 1]  # n/k_l
        al, bl = a[l - 1], b[l - 1]

        def fixed_point_map(w):
            nonlocal evals
            evals += 1
            zeta = -(1.0 + bl * w) / (al * w)
            _, gprev = node(l - 1, zeta)
            # T(w) = int x/(1+xw) over mu(Sigma_lin) = (1 - g_prev/(a w))/w
            return -1.0 / (zl - cr * (1.0 - gprev / (al * w)) / w)

        w = warm.get(l, -1.0 / zl)
        theta = DAMPING
        prev_step = np.inf
        converged = False
        for it in range(1, 400):
            f = fixed_point_map(w)
            step = abs(f - w)
            w = (1.0 - theta) * w + theta * f
            if step < tol:
                converged = True
                break
            if step > prev_step and it > 200:
                theta = 0.1
            prev_step = step
        if not converged:
            # secant polish on R(w) = F(w) - w: quadratic-ish once the damped
            # sweep has entered the basin (slow linear rates near c >> 1)
            w0, w1 = w, fixed_point_map(w)
            r0, r1 = fixed_point_map(w0) - w0, fixed_point_map(w1) - w1
            for _ in range(max_iter):
                if abs(r1) < tol:
                    converged = True
                    break
                denom = r1 - r0
                if denom == 0:
                    break
                w2 = w1 - r1 * (w1 - w0) / denom
                w0, r0 = w1, r1
                w1 = w2
                r1 = fixed_point_map(w1) - w1
            w = w1
        if not converged:
            raise SolverError(
                f"layer-{l} self-consistent equation did not converge at z={zl}",
                residual=abs(fixed_point_map(w) - w),
                iterations=max_iter,
            )
        warm[l] = w
        zeta = -(1.0 + bl * w) / (al * w)
        _, gprev = node(l - 1, zeta)
        cl = -1.0 / (w * zl * al)
        return w, cl * gprev

    node(L, z)

    # assemble the converged chain top-down
    zs = [0j] * (L + 1)
    wcm = [0j] * (L + 1)
    cs = [0j] * L
    gram = [0j] * (L + 1)
    residuals = [0.0] * (L + 1)
    zs[L] = z
    for l in range(L, 0, -1):
        w, _ = node(l, zs[l])
        wcm[l] = w
        cs[l - 1] = -1.0 / (w * zs[l] * a[l - 1])
        zs[l - 1] = cs[l - 1] * zs[l] - b[l - 1] / a[l - 1]
    _, g0v = node(0, zs[0])
    gram[0] = g0v
    wcm[0] = alpha * g0v - (1.0 - alpha) / zs[0]  # k_0-side trace of the data Gram
    for l in range(1, L + 1):
        gram[l] = cs[l - 1] * gram[l - 1]
        cr = alpha / gammas[l - 1]
        residuals[l] = abs(
            1.0 - cr + zs[l] * wcm[l] + cr * gram[l - 1] / (a[l - 1] * wcm[l])
        ) / abs(zs[l])
        if zs[l].imag != 0.0 and wcm[l].imag * zs[l].imag < -1e-10:
            raise SolverError(f"non-Nevanlinna chain value at layer {l}")
    return LayerRecursionState(zs, wcm, cs, gram, residuals, evals)


def gram_wcm(coeffs: GECoefficients, alpha: float, z: complex, **kw) -> complex:
    """Deterministic equivalent of the feature-Gram resolvent trace.

    The k_L-normalized trace of ((X_L X_L^T / k_L) - z)^{-1}; this is the
    quantity feeding the ridge asymptotics at z = -lambda.
    """
    state = layer_recursion(coeffs, alpha, z, **kw)
    return state.wcm[-1]


# --------------------------------------------------------------------------
# population spectrum (two-array scheme)
# --------------------------------------------------------------------------


def _aitken_chain_solve(z, rho, a, b, x, w, m_init, tol=1e-11,
                        chunk=400, rounds=12, gate=1e-9):
    """pop_chain_solve with Aitken extrapolation across iteration chunks.

    Near a spectral edge the damped sweep contracts at rate 1 - O(sqrt(eta));
    the chunk endpoints then form a nearly geometric sequence, which the
    delta-squared step extrapolates to the fixed point.
    """
    m0 = np.asarray(m_init, dtype=complex)
    total = 0
    res = np.inf
    for _ in range(rounds):
        iterates = []
        for _ in range(3):
            m0, res, it = _kernels.pop_chain_solve(
                complex(z), rho, a, b, x, w, m0, DAMPING, tol, chunk
            )
            total += it
            if res < gate:
                return m0, res, total
            iterates.append(m0)
        m1, m2, m3 = iterates
        d2, d1 = m3 - m2, m2 - m1
        den = d2 - d1
        safe = np.abs(den) > 1e-300
        m0 = np.where(safe, m3 - d2 * np.where(safe, d2 / np.where(safe, den, 1.0), 0.0), m3)
    return m0, res, total


def _pop_residual_gate(z: complex) -> float:
    """Accepted residual in m-units: strict off the axis, relaxed at the
    near-axis points that only feed eta-regularized densities."""
    return 1e-9 if dist_to_positive_axis(z) > 1e-3 else 2e-6


def _robust_pop_solve(z, rho, a, b, x, w, m_init, tol=1e-11):
    """Plain solve, then Aitken, then eta-continuation from high above the
    axis (branch tracking survives edge flapping). Returns (m, residual)."""
    z = complex(z)
    m, res, _ = _kernels.pop_chain_solve(z, rho, a, b, x, w, m_init, DAMPING, tol, MAX_ITER)
    gate = _pop_residual_gate(z)
    if res <= gate:
        return m, res
    m, res, _ = _aitken_chain_solve(z, rho, a, b, x, w, m, tol, gate=gate)
    if res <= gate:
        return m, res
    top = 0.5 * max(1.0, abs(z))
    m = np.full(len(m_init), -1.0 / complex(z.real, top), dtype=complex)
    for eta_k in np.geomspace(top, max(abs(z.imag), 1e-9), 25):
        zz = complex(z.real, max(z.imag, eta_k)) if z.imag >= 0 else complex(
            z.real, min(z.imag, -eta_k))
        m, res, _ = _kernels.pop_chain_solve(zz, rho, a, b, x, w, m, DAMPING, tol, 2000)
    m, res, _ = _aitken_chain_solve(z, rho, a, b, x, w, m, tol, gate=gate)
    if res > gate:
        raise SolverError(f"population recursion did not converge at z={z}", residual=res)
    return m, res


def _pop_inputs(coeffs: GECoefficients, omega0_measure):
    if not coeffs.depth:
        raise ConfigurationError("population recursion needs depth >= 1")
    om = omega0_measure or SpectralMeasure.point(1.0)
    if not om.is_atomic:
        raise ConfigurationError("population recursion needs an atomic input measure")
    gam = (1.0,) + coeffs.gammas
    rho = tuple(gam[l - 1] / gam[l] for l in range(1, coeffs.depth + 1))  # k_{l-1}/k_l
    return om, rho, coeffs.a_coeffs(), coeffs.b_coeffs()


def population_atoms(coeffs: GECoefficients, omega0_zero_mass: float = 0.0):
    """Point masses of the limiting spectrum of Omega_lin^L.

    Each layer with k_l > k_{l-1} parks mass 1 - rho_l (1 - m0) at its noise
    level kappastar_l^2; only the final layer's atom survives later
    convolutions, earlier ones are spread into the bulk.
    """
    _, rho, _, b = _pop_inputs(coeffs, None)
    m0 = omega0_zero_mass
    atom = 0.0
    for l in range(coeffs.depth):
        atom = max(1.0 - rho[l] * (1.0 - m0), 0.0)
        m0 = atom if b[l] == 0.0 else 0.0
    if atom > 0.0:
        return [(b[-1], atom)]
    return []


class PopulationResolvent:
    """Trace resolvent of the limiting spectrum of Omega_lin^L.

    Callable at any z off the positive axis. Solutions are continued from a
    far-field anchor and warm-started between calls, which keeps the branch
    tracking stable for real negative arguments.
    """

    def __init__(self, coeffs: GECoefficients, omega0_measure: SpectralMeasure | None = None,
                 tol: float = 1e-11, max_iter: int = MAX_ITER):
        om, rho, a, b = _pop_inputs(coeffs, omega0_measure)
        self._om, self._rho, self._a, self._b = om, np.array(rho), np.array(a), np.array(b)
        self._tol, self._max_iter = tol, max_iter
        self._last: tuple[complex, np.ndarray] | None = None
        self.depth = coeffs.depth
        from .lincov import trace_omega  # local import to avoid a cycle

        self.mean = trace_omega(coeffs, om.mean())

    def _solve_at(self, z: complex, m_init: np.ndarray) -> np.ndarray:
        m, _ = _robust_pop_solve(
            z, self._rho, self._a, self._b, self._om.x, self._om.w, m_init, self._tol
        )
        return m

    def chain(self, z: complex) -> np.ndarray:
        """The converged (m_0 .. m_L) array at z.

        All recursion coefficients are real, so values below the real axis
        come from conjugation; the solver itself only ever tracks the upper
        half-plane branch.
        """
        z = _require_off_axis(z)
        if z.imag < 0:
            return np.conj(self.chain(np.conj(z)))
        if self._last is not None and abs(self._last[0] - z) <= 0.5 * abs(z):
            m = self._solve_at(z, self._last[1])
        else:
            # continue inward along the ray through z from a far-field anchor
            scale = max(1e6 / abs(z), 10.0)
            m = np.full(self.depth + 1, -1.0 / (z * scale), dtype=complex)
            for s in np.geomspace(scale, 1.0, 40):
                m = self._solve_at(z * s, m)
        self._last = (z, m.copy())
        return m

    def __call__(self, z: complex) -> complex:
        return complex(self.chain(z)[-1])

    def derivative(self, z: complex, h_rel: float = 1e-6) -> complex:
        """d m_L / dz by Richardson-extrapolated central differences."""
        h = abs(z) * h_rel
        d1 = (self(z + h) - self(z - h)) / (2 * h)
        d2 = (self(z + h / 2) - self(z - h / 2)) / h
        return (4 * d2 - d1) / 3


@dataclass
class DensityResult:
    grid: np.ndarray
    density: np.ndarray
    iterations: np.ndarray
    eta: float
    atoms: list

    def mass(self) -> float:
        """Trapezoid mass of the continuous part plus detected atoms."""
        return float(np.trapezoid(self.density, self.grid) + sum(m for _, m in self.atoms))


def density_scheme(
    coeffs: GECoefficients,
    grid,
    eta: float = 1e-6,
    omega0_measure: SpectralMeasure | None = None,
    tol: float = 1e-10,
    max_iter: int = MAX_ITER,
) -> DensityResult:
    """Spectral density of Omega_lin^L on a positive grid.

    Runs the two-array scheme at z = lambda + i*eta sweeping the grid left to
    right (warm starts keep the quadratic branch on the Nevanlinna sheet);
    density = Im m_L / pi. Point masses are reported separately in ``atoms``.
    """
    om, rho, a, b = _pop_inputs(coeffs, omega0_measure)
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= 0):
        raise ConfigurationError("density grid must be strictly positive")
    dens = np.empty(grid.size)
    iters = np.empty(grid.size, dtype=int)
    rho_v, a_v, b_v = np.array(rho), np.array(a), np.array(b)
    m = np.full(coeffs.depth + 1, -1.0 / complex(grid[0], 1.0), dtype=complex)
    # serial warm-start sweep from a mollified eta down to the target
    for k, lam in enumerate(grid):
        z = complex(lam, eta)
        m, res, it = _kernels.pop_chain_solve(
            z, rho_v, a_v, b_v, om.x, om.w, m, DAMPING, tol, max_iter
        )
        if res > _pop_residual_gate(z):
            m, res = _robust_pop_solve(z, rho_v, a_v, b_v, om.x, om.w, m, tol)
        dens[k] = max(m[-1].imag / np.pi, 0.0)
        iters[k] = it
    atoms = population_atoms(coeffs)
    for pos, mass in atoms:
        # the point mass shows up as an eta-wide Lorentzian; it is reported
        # separately, so take it back out of the continuous part
        dens -= mass * eta / (np.pi * ((grid - pos) ** 2 + eta**2))
    np.maximum(dens, 0.0, out=dens)
    return DensityResult(grid, dens, iters, eta, atoms)


def sample_covariance_density(
    coeffs: GECoefficients,
    samples_ratio: float,
    grid,
    eta: float = 1e-6,
    omega0_measure: SpectralMeasure | None = None,
) -> DensityResult:
    """Density of the finite-sample covariance of the last-layer features.

    One extra MP convolution (aspect ratio k_L/n_samples) applied to the
    population spectrum; this is the theory curve matching an empirical
    eigenvalue histogram estimated from n_samples feature draws, and it
    absorbs population point masses into smooth spikes.
    """
    if samples_ratio <= 0:
        raise ConfigurationError("samples_ratio = k_L/n_samples must be positive")
    pop = PopulationResolvent(coeffs, omega0_measure)
    measure = SpectralMeasure.from_callable(pop, mean=pop.mean)
    grid = np.asarray(grid, dtype=float)
    dens = np.empty(grid.size)
    last = None
    for k, lam in enumerate(grid):
        mh = mp_mhat(measure, samples_ratio, complex(lam, eta), w0=last)
        last = samples_ratio * (mh - (1.0 - samples_ratio) / (samples_ratio * complex(lam, eta)))
        dens[k] = max(mh.imag / np.pi, 0.0)
    return DensityResult(grid, dens, np.zeros(grid.size, dtype=int), eta, [])


# --------------------------------------------------------------------------
# resolvent derivatives
# --------------------------------------------------------------------------


def resolvent_derivative(
    f: Callable[[complex], complex],
    z: complex,
    radius: float | None = None,
    nodes: int = 64,
    fd_check: bool = True,
    fd_tol: float = 1e-6,
) -> complex:
    """df/dz via a trapezoid Cauchy contour, cross-checked against a central
    finite difference.

    The contour is a circle of radius dist(z, R+)/2 (or ``radius``), which
    stays off the positive axis whenever z does.
    """
    z = complex(z)
    delta = dist_to_positive_axis(z)
    if delta <= 0:
        raise ConfigurationError("derivative requested on the positive real axis")
    r = radius if radius is not None else delta / 2.0
    if r >= delta:
        raise ConfigurationError("contour radius reaches the positive real axis")
    theta = 2.0 * np.pi * np.arange(nodes) / nodes
    vals = np.array([f(z + r * np.exp(1j * t)) for t in theta])
    deriv = complex(np.mean(vals * np.exp(-1j * theta)) / r)
    if fd_check:
        h = delta * 1e-4
        fd = (f(z + h) - f(z - h)) / (2.0 * h)
        scale = max(abs(deriv), abs(fd), 1e-30)
        if abs(deriv - fd) > fd_tol * scale:
            raise SolverError(
                f"contour and finite-difference derivatives disagree at z={z}: "
                f"{deriv} vs {fd}"
            )
    return deriv
