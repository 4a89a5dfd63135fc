"""Spectral Galerkin toolkit for slow-fast stochastic reaction-diffusion systems."""

from .backend import BACKEND
from .errors import BasisMismatch, ConfigError, HypothesisViolation
from .fast import (
    TrajectorySample,
    contraction_estimate,
    moment_profile,
    semigroup_contrast,
    semigroup_expectation,
    simulate_fast,
    simulate_fast_batch,
)
from .functionals import Functional, make_functional
from .measure import (
    AveragedDrift,
    MeasureEstimate,
    averaged_drift,
    averaged_drift_gradient,
    ergodic_measure,
    export_measure_csv,
    measure_moment_growth,
    mixing_rate,
    pcn_measure,
)
from .multiscale import (
    AveragedPath,
    CachedFbar,
    CoupledPath,
    CorrectionEstimate,
    SimConfig,
    apriori_bounds_check,
    closed_form_fbar,
    convergence_study,
    correction_estimate,
    remainder_series,
    remainder_study,
    simulate_coupled,
    simulate_coupled_batch,
    solve_averaged,
    solve_averaged_closed,
)
from .noise import (
    NoiseStream,
    ou_exact_step,
    ou_step_factors,
    stochastic_convolution_moments,
)
from .reaction import (
    ReactionSystem,
    ReactionTerm,
    eval_F,
    eval_G,
    make_reaction,
    make_term,
    parse_term,
    potential_U,
    potential_gradient_check,
    potential_x_derivative,
)
from .spectral import (
    Field,
    OperatorSpectrum,
    analyze,
    apply_semigroup,
    basis_vector,
    build_basis,
    field,
    hilbert_schmidt_decay,
    inner_h,
    norm_h,
    project,
    sobolev_norm,
    synthesize,
    zero_field,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
