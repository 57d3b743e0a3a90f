"""Penalized quasi-likelihood estimation for non-identifiable intensity models."""

from .asymptotics import (
    Box,
    ConditionViolationError,
    CoordinateTag,
    LimitLaw,
    MonteCarloReport,
    RatePlan,
    Scenario,
    check_condition_S,
    gamma_linear,
    gamma_mu_superposition,
    limit_law_linear,
    local_set_U,
    monte_carlo_check,
    rate_matrix,
)
from .covariate import (
    Collinearity,
    CovariatePath,
    MarkovCovariateSpec,
    collinearity_matrix,
    ergodic_average,
    nu_integral,
    simulate,
    stationary_distribution,
)
from .estimator import (
    EstimationResult,
    EstimatorConfig,
    estimate,
    maximize_pattern,
    penalized_objective,
)
from .parsimony import (
    GridSearchConfig,
    NonUniqueMinimizerError,
    RankError,
    TrueValueSet,
    brute_force_pe_min,
    check_j1_independence,
    enumerate_e_sets,
    kernel_basis,
    project_pr_e,
    select_parsimonious,
)
from .penalty import (
    PenaltyEntry,
    PenaltySpec,
    bridge_value,
    check_unique_minimizer,
    penalty_total,
    xi_weight,
)
from .pointprocess import (
    EventPath,
    LinearModel,
    StateStats,
    SuperpositionModel,
    integrated_intensity,
    intensity_at,
    log_likelihood,
    simulate_events,
    sufficient_stats,
)

__version__ = "0.1.0"
