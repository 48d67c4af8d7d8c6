"""EM for the unbalanced symmetric two-component Gaussian mixture.

``X = S theta* + Z`` with ``P(S = 1) = (1 + rho*) / 2`` and ``Z ~ N(0, I_d)``.
The package provides the sample and population (quadrature) EM iterations
for the mean and the weight, baseline estimators, and a Monte Carlo harness.
"""

__version__ = "0.1.0"

from .model import (
    Dataset,
    DomainError,
    GlobalBounds,
    LossKind,
    MixtureParams,
    UnidentifiableError,
    beta_to_rho,
    delta_rho_convert,
    delta_to_rho,
    derive_seed,
    log_likelihood,
    loss,
    make_rng,
    posterior_sign,
    rho_to_beta,
    rho_to_delta,
    sample,
)
from .quadrature import QuadratureGrid
from .trace import DivergenceError, IterationTrace, iterate_map
from .population import (
    PopMeanMap1D,
    PopWeightMap,
    SignalOrthogonalMap,
    find_fixed_points_1d,
    find_weight_fixed_point,
    mean_error_step,
    mean_error_trace,
    mean_iteration_trace,
    orthogonal_map,
    pop_mean,
    pop_mean_1d,
    pop_mean_1d_deriv,
    pop_weight,
    s_function,
    signal_map,
    weight_deriv_at_one,
)
from .empirical import (
    ESTIMATORS,
    ConvergenceError,
    Estimate,
    EstimatorConfig,
    InitKind,
    StopRule,
    adaptive_em,
    em_balanced_sign_corrected,
    em_mean_estimate,
    em_weight_estimate,
    emp_mean_iter,
    emp_weight_iter,
    joint_alternating,
    mom_mean,
    mom_weight,
    power_iteration,
    run_estimator,
    spectral_estimate,
    spectral_from_moment,
)
from .analysis import (
    ConcentrationReport,
    RateEnvelope,
    Regime,
    SweepResult,
    SweepSpec,
    concentration_check,
    convergence_time,
    error_sweep,
    landscape_scan,
    rate_envelope,
)
