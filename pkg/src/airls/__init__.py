"""Robust online joint state/input/parameter estimation for linear systems.

AIRLS streams measurement triples through a discounted correlation matrix and
alternates reweighted least-squares updates of the signal subspace and the
parameters, which keeps the estimate accurate under heavy-tailed measurement
noise. The package also ships RTLS and RLS baselines behind the same
interface, a trajectory simulator with outlier injection, and a benchmark
harness with a CLI.
"""

from .baselines import (
    RlsConfig,
    RlsEstimator,
    RlsState,
    RtlsConfig,
    RtlsEstimator,
    RtlsState,
    extract_parameters,
    init_rls,
    init_rtls,
    rls_step,
    rtls_step,
)
from .bench import (
    EstimatorSpec,
    ExperimentConfig,
    TrialResult,
    default_config,
    default_ratio_grid,
    load_config,
    make_estimator,
    merge_sweeps,
    read_sweep_csv,
    reconstruct_states,
    rel_frobenius_error,
    run_sweep,
    run_trial,
    trial_seed,
)
from .correlation import (
    CorrelationState,
    build_gamma,
    discount_update,
    initial_correlation,
    replace_z_block,
)
from .estimator import (
    AirlsEstimator,
    EstimatorConfig,
    EstimatorState,
    PointEstimate,
    Regularization,
    airls_step,
    check_beta_bound,
    gamma_bounds,
    init_state,
    load_snapshot,
    param_weights,
    point_estimate,
    residual_norm_sq,
    save_snapshot,
    state_weights,
    update_theta,
    update_Z,
    update_Z_column,
)
from .exceptions import (
    ConfigError,
    DimensionMismatchError,
    InvalidBoundsError,
    SingularNormalMatrixError,
    ZeroTruthError,
)
from .kernels import make_projector, solve_weighted_ls, weighted_pseudo_inverse
from .sim import (
    LinearSystem,
    NoiseConfig,
    TrajectorySample,
    generate_trajectory,
    measurement_vector,
    read_trace,
    simulate_step,
    stack_measurements,
    write_trace,
)

__version__ = "0.1.0"
