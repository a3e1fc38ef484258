"""Vecchia approximations of Matern Gaussian processes on layered DAGs.

The package builds sparse directed conditioning structures over point
sets, turns them into triangular factors of the implied Gaussian
precision, and runs posterior inference and numeric diagnostics on top.
"""

from .dag import (
    DagValidation,
    LayeredDag,
    build_full_dag,
    build_general_dag,
    build_grid_dag,
    build_maximin_nngp_dag,
    maximin_order,
    validate_dag,
)
from .diagnostics import (
    DecayProfile,
    FlatLimitCurve,
    estimate_vartheta,
    flat_limit_error,
    gaussian_w2_sq,
    transition_measure_sup,
    transition_measure_value,
    variance_decay_profile,
)
from .errors import (
    CapExceeded,
    DuplicatePoints,
    EmptyTrace,
    NearSingularParents,
    NotAGrid,
    NotConverged,
    NotPSD,
    OutOfSupport,
    PoolTooSmall,
    SingularSystem,
    UnsupportedAlpha,
    UnsupportedOrder,
    VecdagError,
)
from .experiments import (
    ExperimentConfig,
    MethodSpec,
    ResultRow,
    SyntheticData,
    TruthSpec,
    generate_synthetic,
    parse_experiment_config,
    run_density_benchmark,
    run_experiment,
    unit_grid,
)
from .factor import VecchiaFactor, build_factor, predict
from .inference import (
    ChainSummary,
    GibbsTraces,
    McmcConfig,
    PowerExponentialTau,
    PriorSpec,
    cg_solve,
    match_observations,
    posterior_summary,
    run_gibbs,
    sigma2_full_conditional,
    tau_log_hyperprior,
)
from .kernels import (
    ConditionalMoments,
    MaternConfig,
    conditional_moments,
    correlation_matrix,
    cov_matrix,
    matern_correlation,
    matern_cov,
    strict_floor,
)
from .polynomials import (
    NormingReport,
    basis_size,
    corner_set,
    interp_weights,
    min_singular_value,
    monomial_matrix,
    monomial_vector,
    multi_index_sequence,
    norming_constant,
    norming_constant_lagrange,
    norming_report,
    scaled_min_singular,
    vandermonde,
)

__version__ = "0.1.0"

__all__ = [
    "CapExceeded",
    "ChainSummary",
    "ConditionalMoments",
    "DagValidation",
    "DecayProfile",
    "DuplicatePoints",
    "EmptyTrace",
    "ExperimentConfig",
    "FlatLimitCurve",
    "GibbsTraces",
    "LayeredDag",
    "MaternConfig",
    "McmcConfig",
    "MethodSpec",
    "NearSingularParents",
    "NormingReport",
    "NotAGrid",
    "NotConverged",
    "NotPSD",
    "OutOfSupport",
    "PoolTooSmall",
    "PowerExponentialTau",
    "PriorSpec",
    "ResultRow",
    "SingularSystem",
    "SyntheticData",
    "TruthSpec",
    "UnsupportedAlpha",
    "UnsupportedOrder",
    "VecchiaFactor",
    "VecdagError",
    "basis_size",
    "build_factor",
    "build_full_dag",
    "build_general_dag",
    "build_grid_dag",
    "build_maximin_nngp_dag",
    "cg_solve",
    "conditional_moments",
    "corner_set",
    "correlation_matrix",
    "cov_matrix",
    "estimate_vartheta",
    "flat_limit_error",
    "gaussian_w2_sq",
    "generate_synthetic",
    "interp_weights",
    "match_observations",
    "matern_correlation",
    "matern_cov",
    "maximin_order",
    "min_singular_value",
    "monomial_matrix",
    "monomial_vector",
    "multi_index_sequence",
    "norming_constant",
    "norming_constant_lagrange",
    "norming_report",
    "parse_experiment_config",
    "posterior_summary",
    "predict",
    "run_density_benchmark",
    "run_experiment",
    "run_gibbs",
    "scaled_min_singular",
    "sigma2_full_conditional",
    "strict_floor",
    "tau_log_hyperprior",
    "transition_measure_sup",
    "transition_measure_value",
    "unit_grid",
    "validate_dag",
    "vandermonde",
    "variance_decay_profile",
]
