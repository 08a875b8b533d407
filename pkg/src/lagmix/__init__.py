"""Stochastic fluid models, passive-scalar transport and Lagrangian chaos
diagnostics on the 2pi-periodic torus."""

__version__ = "0.1.0"

from .spectral import (  # noqa: F401
    DriftFunctionParams,
    FourierField,
    ModeIndex,
    NoiseSpec,
    basis_eval,
    eta_star,
    low_mode_set,
    lyapunov_V,
    sobolev_norm,
    vorticity_norm,
)
from .velocity import (  # noqa: F401
    GalerkinNSE,
    NSE2D,
    OUTower,
    Stokes,
    VelocityState,
    galerkin_rhs,
    sample_stationary,
    step_ou_tower,
    step_velocity,
)
from .scalar import ScalarState, dissipation_rate, scalar_spectrum, step_scalar  # noqa: F401
from .lagrangian import (  # noqa: F401
    ParticleEnsemble,
    advance_particles,
    advance_tangent,
    gradient_at,
    two_point_separation,
    velocity_at,
)
from .estimators import (  # noqa: F401
    detect_tau_star,
    drift_check,
    duality_check,
    estimate_lambda1,
    estimate_moment_lyap,
    fit_decay,
    scaling_fit,
)
from .seeding import NoiseDraw, derive_seed  # noqa: F401
