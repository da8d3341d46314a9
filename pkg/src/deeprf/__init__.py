"""Exact high-dimensional asymptotics for learning with deep random features.

Theory side: Gaussian-equivalence coefficients, linearized covariances,
deterministic-equivalent Stieltjes transforms, spectral densities, and test
error predictions for ridge and logistic readouts. Simulation side: finite
size Monte Carlo of the actual multi-layer random network. The harness
compares the two.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .activations import (
    Activation,
    center_activation,
    clipped_linear,
    custom,
    erf,
    identity,
    parse_activation,
    relu,
    sign,
    tanh_scaled,
)
from .arch import (
    ArchitectureSpec,
    GECoefficients,
    SampledNetwork,
    center_network,
    compute_coefficients,
    sample_network,
)
from .exceptions import (
    ConfigurationError,
    DeepRFError,
    DegenerateVarianceError,
    QuadratureError,
    SolverError,
)
from .lincov import (
    CovarianceSet,
    EffectiveLinearModel,
    build_covariance_set,
    effective_linear,
    noise_trace,
    omega_lin,
    phi_lin,
    psi_lin,
    trace_omega,
)
from .ridge import RidgeSetting, asymptotic_ridge_error, finite_rmt_oracle, ridge_error_from_measure
from .rmt import (
    DensityResult,
    LayerRecursionState,
    PopulationResolvent,
    SpectralMeasure,
    density_scheme,
    gram_wcm,
    layer_recursion,
    mp_mhat,
    mp_selfconsistent,
    resolvent_derivative,
    sample_covariance_density,
)
from .saddle import (
    LogisticChannel,
    SaddleState,
    SquareChannel,
    classification_error,
    gaussian_channel_integrals,
    logistic_prox,
    regression_error,
    solve_saddle,
    solve_saddle_matched_spectral,
)
from .sim import (
    Dataset,
    FitResult,
    empirical_error,
    empirical_spectrum,
    fit_logistic,
    fit_ridge,
    generate,
    propagate_features,
    sample_gcm_features,
    sample_inputs,
)

__version__ = "0.1.0"
