"""Named experiment configurations for the reference experiments.

Desk-scale defaults (d=300, 10 seeds) keep every preset runnable in minutes;
--paper-scale switches to the dimensions the original plots were made at
(d=1000, 20-50 seeds). Width ratios that the source figures leave unstated
default to 1 and are recorded in each preset's notes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import activations as act
from .arch import ArchitectureSpec
from .exceptions import ConfigurationError

DESK_D = 300
DESK_SEEDS = 10
PAPER_D = 1000
PAPER_SEEDS = 20

DEFAULT_ALPHAS = (0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a harness run needs besides the output directory."""

    name: str
    learner: dict          # architecture template: depth/gammas/activations/deltas
    target: dict
    channel: str           # "square" | "logistic"
    lam: float
    delta: float
    alphas: tuple
    d: int
    seeds: int
    readout: str           # "identity" | "sign"
    master_seed: int = 2024
    theory_draws: int = 3
    z_threshold: float = 3.0
    min_fraction: float = 0.9
    spectrum_layers: tuple = ()
    spectrum_samples: int = 100_000
    grid: tuple | None = None
    eta: float = 1e-6
    threads: int = 1
    notes: str = ""

    def learner_spec(self) -> ArchitectureSpec:
        return _build_spec(self.learner, self.d)

    def target_spec(self) -> ArchitectureSpec:
        return _build_spec(self.target, self.d)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "learner": self.learner,
            "target": self.target,
            "channel": self.channel,
            "lambda": self.lam,
            "delta": self.delta,
            "alphas": list(self.alphas),
            "d": self.d,
            "seeds": self.seeds,
            "readout": self.readout,
            "master_seed": self.master_seed,
            "theory_draws": self.theory_draws,
            "z_threshold": self.z_threshold,
            "min_fraction": self.min_fraction,
            "notes": self.notes,
        }
        if self.spectrum_layers:
            out["spectrum_layers"] = list(self.spectrum_layers)
            out["spectrum_samples"] = self.spectrum_samples
        if self.grid is not None:
            out["grid"] = list(self.grid)
        return out


def _build_spec(template: dict, d: int) -> ArchitectureSpec:
    depth = int(template["depth"])
    return ArchitectureSpec(
        depth=depth,
        gammas=tuple(template.get("gammas", (1.0,) * depth)),
        activations=tuple(
            act.parse_activation(a) for a in template.get("activations", ())
        ),
        deltas=tuple(template.get("deltas", (1.0,) * depth)),
        d=d,
    )


def _net(depth, activation, gammas=None, deltas=None) -> dict:
    return {
        "depth": depth,
        "gammas": list(gammas) if gammas is not None else [1.0] * depth,
        "activations": [activation] * depth,
        "deltas": list(deltas) if deltas is not None else [1.0] * depth,
    }


def config_from_json(doc: dict) -> ExperimentConfig:
    return ExperimentConfig(
        name=doc.get("name", "custom"),
        learner=doc["learner"],
        target=doc["target"],
        channel=doc.get("channel", "square"),
        lam=float(doc.get("lambda", doc.get("lam", 1e-3))),
        delta=float(doc.get("delta", 0.0)),
        alphas=tuple(doc.get("alphas", DEFAULT_ALPHAS)),
        d=int(doc.get("d", DESK_D)),
        seeds=int(doc.get("seeds", DESK_SEEDS)),
        readout=doc.get("readout", "identity"),
        master_seed=int(doc.get("master_seed", 2024)),
        theory_draws=int(doc.get("theory_draws", 3)),
        z_threshold=float(doc.get("z_threshold", 3.0)),
        min_fraction=float(doc.get("min_fraction", 0.9)),
        spectrum_layers=tuple(doc.get("spectrum_layers", ())),
        spectrum_samples=int(doc.get("spectrum_samples", 100_000)),
        grid=tuple(doc["grid"]) if "grid" in doc else None,
        eta=float(doc.get("eta", 1e-6)),
        notes=doc.get("notes", ""),
    )


def _fig1(name, target, notes):
    return ExperimentConfig(
        name=name,
        learner=_net(2, "tanh_scaled:2"),
        target=target,
        channel="square",
        lam=1e-3,
        delta=0.0,
        alphas=DEFAULT_ALPHAS,
        d=DESK_D,
        seeds=DESK_SEEDS,
        readout="identity",
        notes=notes,
    )


def _fig2(name, target, learner_act, lam, notes):
    return ExperimentConfig(
        name=name,
        learner=_net(2, learner_act),
        target=target,
        channel="logistic",
        lam=lam,
        delta=0.0,
        alphas=DEFAULT_ALPHAS,
        d=DESK_D,
        seeds=DESK_SEEDS,
        readout="sign",
        notes=notes,
    )


def fig3_config(family: str, depth: int) -> ExperimentConfig:
    if family == "tanh":
        activation = "tanh"
    elif family in ("clip", "clipped"):
        activation = "clipped_linear:1.1:2"
    else:
        raise ConfigurationError(f"unknown depth family {family!r}")
    return ExperimentConfig(
        name=f"fig3_{family}_L{depth}",
        learner=_net(depth, activation, gammas=[4.0] * depth),
        target=_net(1, "sign", gammas=[2.0]),
        channel="square",
        lam=1e-3,
        delta=0.0,
        alphas=(0.5, 0.8, 1.0, 1.2, 2.0, 3.0, 3.6, 4.0, 4.4, 6.0),
        d=DESK_D,
        seeds=DESK_SEEDS,
        readout="identity",
        notes="width-4 learner on a width-2 sign target; peaks at alpha=1 and alpha=4",
    )


def _spectrum(name, learner, grid_hi, layers, notes):
    return ExperimentConfig(
        name=name,
        learner=learner,
        target=_net(0, "identity", gammas=[], deltas=[]),
        channel="square",
        lam=1e-3,
        delta=0.0,
        alphas=(1.0,),
        d=500,
        seeds=1,
        readout="identity",
        spectrum_layers=layers,
        grid=tuple(float(x) for x in _linspace(5e-3, grid_hi, 400)),
        notes=notes,
    )


def _linspace(a, b, n):
    step = (b - a) / (n - 1)
    return [a + i * step for i in range(n)]


def appe_deep_vs_wide(m: int, gamma: float, wide: bool) -> ExperimentConfig:
    if m < 3:
        raise ConfigurationError("the parameter-matched pair needs m >= 3")
    if wide:
        learner = _net(3, "tanh", gammas=[gamma, (m - 2) * gamma, gamma])
        shape = "wide"
    else:
        learner = _net(m, "tanh", gammas=[gamma] * m)
        shape = "deep"
    return ExperimentConfig(
        name=f"appE_deep_vs_wide_m{m}_gamma{gamma:g}_{shape}",
        learner=learner,
        target=_net(1, "sign", gammas=[4.0]),
        channel="square",
        lam=1e-3,
        delta=0.5,
        alphas=(0.5, 1.0, 2.0, 4.0),
        d=DESK_D,
        seeds=DESK_SEEDS,
        readout="identity",
        notes="equal trainable parameters: depth-m rectangle vs wide 3-layer; "
              "noise level 0.5 chosen to expose the near-peak regularization",
    )


def appe_bottleneck(gamma: float, bottleneck: bool) -> ExperimentConfig:
    gammas = [gamma, gamma, 0.5, gamma] if bottleneck else [gamma] * 4
    shape = "bottleneck" if bottleneck else "rect"
    return ExperimentConfig(
        name=f"appE_bottleneck_gamma{gamma:g}_{shape}",
        learner=_net(4, "tanh", gammas=gammas),
        target=_net(1, "sign", gammas=[2.0]),
        channel="square",
        lam=1e-3,
        delta=0.5,
        alphas=(0.5, 1.0, 2.0, 4.0),
        d=DESK_D,
        seeds=DESK_SEEDS,
        readout="identity",
        notes="narrow third layer against the matched rectangle; "
              "target width 2 chosen (unstated in the source figure)",
    )


PRESETS = {
    "fig1_left": lambda: _fig1(
        "fig1_left",
        _net(1, "sign"),
        "two-layer sign target (width 1 chosen; unstated in the source figure)",
    ),
    "fig1_right": lambda: _fig1(
        "fig1_right", _net(0, "identity", gammas=[], deltas=[]),
        "single-layer (linear) target",
    ),
    "fig2_left": lambda: _fig2(
        "fig2_left", _net(0, "identity", gammas=[], deltas=[]), "tanh_scaled:2", 0.05,
        "logistic readout on a single-layer sign-label target",
    ),
    "fig2_right": lambda: _fig2(
        "fig2_right", _net(1, "erf"), "erf", 0.1,
        "logistic readout on an erf-hidden-layer target",
    ),
    "fig4_top": lambda: _spectrum(
        "fig4_top", _net(2, "tanh_scaled:2", gammas=[1.2, 0.6]), 3.5, (2,),
        "population spectrum, expanding-then-contracting tanh(2x) network",
    ),
    "fig4_bottom": lambda: _spectrum(
        "fig4_bottom", _net(2, "sign", gammas=[0.7, 1.2]), 5.5, (2,),
        "population spectrum with a point mass from the width step",
    ),
    "fig5": lambda: _spectrum(
        "fig5", _net(5, "tanh", gammas=[1.0] * 5), 4.5, (1, 2, 3, 4, 5),
        "layer-by-layer spectra of a rectangular tanh network",
    ),
}

for _fam in ("tanh", "clip"):
    for _L in range(1, 7):
        PRESETS[f"fig3_{_fam}_L{_L}"] = (
            lambda fam=_fam, L=_L: fig3_config(fam, L)
        )
for _m in (3, 5, 8):
    for _gamma in (1.0, 4.0):
        for _wide in (False, True):
            cfg = f"appE_deep_vs_wide_m{_m}_gamma{_gamma:g}_{'wide' if _wide else 'deep'}"
            PRESETS[cfg] = (
                lambda m=_m, g=_gamma, w=_wide: appe_deep_vs_wide(m, g, w)
            )
for _gamma in (1.0, 2.0, 4.0):
    for _b in (False, True):
        cfg = f"appE_bottleneck_gamma{_gamma:g}_{'bottleneck' if _b else 'rect'}"
        PRESETS[cfg] = lambda g=_gamma, b=_b: appe_bottleneck(g, b)


def get_preset(name: str, d: int | None = None, seeds: int | None = None,
               paper_scale: bool = False) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigurationError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        )
    cfg = PRESETS[name]()
    if paper_scale:
        cfg = cfg.with_overrides(d=PAPER_D, seeds=PAPER_SEEDS)
    return cfg.with_overrides(d=d, seeds=seeds)
