"""Finite-time Lyapunov exponents for spectral-Galerkin SPDE models with
quadratic nonlinearities, and for their reduced cubic amplitude equations."""

from .spectral import (
    SpectralField,
    CouplingTable,
    ModelSpec,
    NonStableInput,
    burgers_model,
    ks_model,
    apply_A,
    apply_As_inverse,
    bilinear_B,
    project_c,
    project_s,
)
from .amplitude import (
    CubicForm,
    derive_Fc,
    derive_DFc,
    ae_simulate,
    ae_deterministic_ftle,
    ae_deterministic_ftle_closed,
)
from .integrate import SimParams, Trajectory, EnsembleRun, run_ensemble, simulate
from .tangent import (
    NonConvergedError,
    ftle_spde,
    ftle_from_propagator,
    matrix_two_norm,
    propagator,
)
from .harness import (
    FtleSample,
    SweepResult,
    GapReport,
    fit_loglog,
    gap_bound_check,
    ito_residual,
    sign_fraction,
    wilson_interval,
)
from .experiments import (
    EnsembleJob,
    RegimeReport,
    amplitude_sweep,
    ftle_ensemble,
    ftle_rate_sweep,
    regime_study,
    run_distributed,
)
from .config import ConfigError, ExperimentConfig, config_hash, parse_config

__version__ = "0.1.0"
