"""Network architectures, weight sampling and equivalence coefficients.

The coefficient pipeline maps an architecture to the per-layer triple
(r_l, kappa1_l, kappastar_l):

    r_1     = Delta_1 * tr(Omega_0)/d
    r_{l+1} = Delta_{l+1} * E_{xi~N(0,r_l)}[sigma_l(xi)^2]
    kappa1_l     = E[xi sigma_l(xi)] / r_l
    kappastar_l  = sqrt(E[sigma_l(xi)^2] - r_l * kappa1_l^2)

kappa1 is the linear component of the activation under a Gaussian input of
variance r_l and kappastar the residual (noise) strength; together they
drive every deterministic-equivalent computation downstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import matio
from .activations import center_activation, format_activation, parse_activation
from .exceptions import ConfigurationError
from .rng import stream

NEGATIVE_RADICAND_TOL = -1e-12


@dataclass(frozen=True, eq=False)
class ArchitectureSpec:
    """Depth, width ratios, activations and weight variances of one network.

    ``omega0`` is the input covariance; None means identity. Hidden widths
    are k_l = round(gamma_l * d); k_0 = d.
    """

    depth: int
    gammas: tuple
    activations: tuple
    deltas: tuple
    d: int
    omega0: np.ndarray | None = None

    def __post_init__(self):
        L = self.depth
        if L < 0:
            raise ConfigurationError("depth must be >= 0")
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "deltas", tuple(float(x) for x in self.deltas))
        object.__setattr__(self, "activations", tuple(self.activations))
        if not (len(self.gammas) == len(self.activations) == len(self.deltas) == L):
            raise ConfigurationError("gammas, activations, deltas must have length depth")
        if any(g <= 0 for g in self.gammas) or any(dl <= 0 for dl in self.deltas):
            raise ConfigurationError("width ratios and weight variances must be positive")
        if self.d < 1:
            raise ConfigurationError("input dimension must be >= 1")
        if any(k < 1 for k in self.widths):
            raise ConfigurationError("every layer must have width >= 1")
        if self.omega0 is not None:
            om = np.asarray(self.omega0, dtype=float)
            if om.shape != (self.d, self.d):
                raise ConfigurationError("omega0 must be d x d")
            if not np.allclose(om, om.T, atol=1e-10):
                raise ConfigurationError("omega0 must be symmetric")
            tr, tr2 = np.trace(om) / self.d, np.trace(om @ om) / self.d
            if tr <= 0 or tr2 <= 0:
                raise ConfigurationError("omega0 must have positive normalized traces")
            object.__setattr__(self, "omega0", om)

    @property
    def widths(self) -> tuple:
        return (self.d,) + tuple(max(1, round(g * self.d)) for g in self.gammas)

    @property
    def k_out(self) -> int:
        return self.widths[-1]

    def trace_omega0_over_d(self) -> float:
        if self.omega0 is None:
            return 1.0
        return float(np.trace(self.omega0) / self.d)

    def omega0_matrix(self) -> np.ndarray:
        return np.eye(self.d) if self.omega0 is None else self.omega0

    def with_activations(self, acts) -> "ArchitectureSpec":
        return ArchitectureSpec(self.depth, self.gammas, tuple(acts), self.deltas, self.d, self.omega0)

    # --- JSON wire format -------------------------------------------------
    def to_json(self, omega0_path: str | None = None) -> dict:
        if self.omega0 is not None and omega0_path is None:
            raise ConfigurationError("non-identity omega0 needs a matrix file path")
        return {
            "depth": self.depth,
            "gammas": list(self.gammas),
            "activations": [format_activation(a) for a in self.activations],
            "deltas": list(self.deltas),
            "d": self.d,
            "omega0": "identity" if self.omega0 is None else str(omega0_path),
        }

    @classmethod
    def from_json(cls, doc: dict, base_dir: str | Path = ".") -> "ArchitectureSpec":
        om = doc.get("omega0", "identity")
        omega0 = None if om == "identity" else matio.read_matrix(Path(base_dir) / om)
        return cls(
            depth=int(doc["depth"]),
            gammas=tuple(doc["gammas"]),
            activations=tuple(parse_activation(a) for a in doc["activations"]),
            deltas=tuple(doc["deltas"]),
            d=int(doc["d"]),
            omega0=omega0,
        )

    def save(self, path, omega0_filename="omega0.mat"):
        path = Path(path)
        omega0_path = None
        if self.omega0 is not None:
            matio.write_matrix(path.parent / omega0_filename, self.omega0)
            omega0_path = omega0_filename
        path.write_text(json.dumps(self.to_json(omega0_path), indent=2))

    @classmethod
    def load(cls, path) -> "ArchitectureSpec":
        path = Path(path)
        return cls.from_json(json.loads(path.read_text()), path.parent)


@dataclass(frozen=True)
class GECoefficients:
    """Per-layer (r, kappa1, kappastar) plus the ratios they were built from.

    ``r`` has length L+1: r[L] is the variance the next layer would see with
    unit weight variance, i.e. the normalized trace of the last-layer
    population covariance.
    """

    r: tuple
    kappa1: tuple
    kappa_star: tuple
    gammas: tuple
    deltas: tuple

    @property
    def depth(self) -> int:
        return len(self.kappa1)

    def a_coeffs(self) -> tuple:
        """Delta_l * kappa1_l^2 per layer: the linear-gain factors that enter
        every spectral recursion once weights are standardized."""
        return tuple(d * k**2 for d, k in zip(self.deltas, self.kappa1))

    def b_coeffs(self) -> tuple:
        """kappastar_l^2 per layer."""
        return tuple(k**2 for k in self.kappa_star)


@dataclass(frozen=True, eq=False)
class SampledNetwork:
    spec: ArchitectureSpec
    weights: tuple
    seed: int

    def __post_init__(self):
        ws = self.spec.widths
        for l, W in enumerate(self.weights, start=1):
            if W.shape != (ws[l], ws[l - 1]):
                raise ConfigurationError(
                    f"layer {l} weight shape {W.shape} != {(ws[l], ws[l - 1])}"
                )
        for W in self.weights:
            W.setflags(write=False)


def compute_coefficients(spec: ArchitectureSpec, auto_center: bool = False) -> GECoefficients:
    """Run the coefficient recursion for every layer of ``spec``.

    With ``auto_center`` the recursion is applied to mean-shifted copies of
    non-centered activations (the shift computed layer by layer at that
    layer's r); otherwise a non-centered activation raises.
    """
    r = [spec.deltas[0] * spec.trace_omega0_over_d()] if spec.depth else [spec.trace_omega0_over_d()]
    kappa1, kappa_star = [], []
    for l, act in enumerate(spec.activations):
        rl = r[-1]
        if rl <= 0:
            raise ConfigurationError(f"non-positive pre-activation variance at layer {l + 1}")
        if not act.odd:
            mu = act.mean(rl)
            if abs(mu) > 1e-10:
                if not auto_center:
                    raise ConfigurationError(
                        f"activation {act.name!r} has mean {mu:.3e} at r={rl:.6g}; "
                        "center it first (center_activation) or pass auto_center=True"
                    )
                act = center_activation(act, rl)
        m1, m2 = act.moments(rl)
        k1 = m1 / rl
        rad = m2 - rl * k1**2
        if rad < NEGATIVE_RADICAND_TOL:
            raise ConfigurationError(
                f"negative second-moment radicand {rad:.3e} at layer {l + 1}: "
                "quadrature inconsistency"
            )
        kappa1.append(k1)
        kappa_star.append(np.sqrt(max(rad, 0.0)))
        delta_next = spec.deltas[l + 1] if l + 1 < spec.depth else 1.0
        r.append(delta_next * m2)
    return GECoefficients(tuple(r), tuple(kappa1), tuple(kappa_star), spec.gammas, spec.deltas)


def center_network(spec: ArchitectureSpec) -> ArchitectureSpec:
    """Replace each activation by its centered version at that layer's r."""
    r = spec.deltas[0] * spec.trace_omega0_over_d() if spec.depth else spec.trace_omega0_over_d()
    acts = []
    for l, act in enumerate(spec.activations):
        act = center_activation(act, r)
        acts.append(act)
        _, m2 = act.moments(r)
        delta_next = spec.deltas[l + 1] if l + 1 < spec.depth else 1.0
        r = delta_next * m2
    return spec.with_activations(acts)


def sample_network(spec: ArchitectureSpec, seed: int) -> SampledNetwork:
    """Draw the weight matrices W_l with i.i.d. N(0, Delta_l) entries.

    Layer l uses the Philox substream (seed, "weights", l), so the draw for
    one layer never depends on the others.
    """
    ws = spec.widths
    weights = []
    for l in range(1, spec.depth + 1):
        g = stream(seed, "weights", l)
        W = g.standard_normal((ws[l], ws[l - 1])) * np.sqrt(spec.deltas[l - 1])
        weights.append(W)
    return SampledNetwork(spec, tuple(weights), seed)
