"""Multilook speckle-noise model, likelihood-based estimators and minimax risk experiments."""
from .errors import (
    BudgetExceeded,
    DimensionMismatch,
    InvalidDims,
    NonPositiveInput,
    NotPositiveDefinite,
    OutOfBox,
    ParseError,
    SearchSpaceTooLarge,
    SingularNormalMatrix,
    SpeckleError,
    TooFewPoints,
    ValidationError,
)
from .model import (
    ModelInstance,
    ObservationSet,
    RandomStream,
    Signal,
    draw_operators,
    generate_instance,
    make_instance,
    make_signal,
    mse,
    observe,
    sample_signal_class,
    zero_signal,
)
from .likelihood import factorize, gaussian_kl, log_likelihood, log_likelihood_gradient
from .projection import project_many, project_piecewise_constant, projection_cost
from .estimators import (
    NetSpec,
    OptimizerConfig,
    mle_net_search,
    mle_projected_ascent,
    net_candidate_count,
    sufficient_statistic_estimate,
)
from .lowerbound import (
    FanoInputs,
    LowerBoundReport,
    SeparatedSetSpec,
    build_finite_class,
    build_separated_set,
    covering_bounds,
    default_delta_r,
    evaluate_instance_lower_bound,
    fano_bound,
    finite_class_size,
    separation_radius,
)
from .concentration import (
    decoupling_mean_check,
    gaussian_chaos_tail_bound,
    hanson_wright_check,
    inverse_difference_bound,
    inverse_difference_bound_check,
    observation_norm_check,
    run_suite,
    singular_value_tail_check,
)
from .harness import (
    SweepConfig,
    SweepRecord,
    compare_varying_unvarying,
    fit_loglog_slope,
    parse_config,
    predicted_rate,
    run_sweep,
)

__version__ = "0.1.0"
