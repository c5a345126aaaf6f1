"""Prior and loss sensitivity of generalised posteriors via the Fisher divergence.

Everything works from one set of reference-posterior draws plus score
evaluations. For exponential-family priors and losses linear in their
hyperparameters the empirical divergence is an exact quadratic in those
hyperparameters, which makes worst-case analysis over neighbourhoods cheap.
"""

from .errors import (
    ConfigError,
    ContractError,
    DataFormatError,
    DomainError,
    EvaluationError,
    FdSenseError,
    NumericalError,
)
from .scores import (
    ExpFamilyPrior,
    GaussianCopulaScore,
    LinearLoss,
    PrecomputedScores,
    SampleSet,
    ScoreField,
    copula_fd_objective,
    copula_score,
    copula_score_many,
    eval_scores_over_samples,
    expfam_prior_score,
    gaussian_family,
    gaussian_moment_from_natural,
    gaussian_natural_from_moment,
    half_cauchy_field,
    half_cauchy_score,
    invgamma_family,
    invgamma_natural_from_shape_rate,
    invgamma_shape_rate_from_natural,
    posterior_score,
    product_family,
)
from .estimation import (
    FdDecomposition,
    FdEstimate,
    chebyshev_error_bound,
    decompose_fd,
    estimate_fd,
    integrated_autocorr_time,
    per_dimension_fd,
)
from .quadratic import (
    QuadraticObjective,
    build_joint,
    build_loss_only,
    build_prior_only,
    build_prior_only_blocks,
    count_evaluations,
    evaluate,
    evaluate_many,
)
from .optimize import (
    BoxNeighborhood,
    PolytopeNeighborhood,
    SensitivityResult,
    box_vertices,
    learning_rate_sensitivity,
    pgd_min_box,
    pgd_min_polytope,
    sensitivity_box,
    sensitivity_polytope,
    sensitivity_scalar_search,
    sensitivity_separable,
    sup_over_vertices,
)
from .gaussian import (
    GaussianDist,
    conjugate_posterior,
    conjugate_posterior_from_natural,
    fd_gaussian,
    gaussian_score_field,
    kl_gaussian,
    w2_gaussian,
)
from .local import ScoreJacobianField, directional_derivative

__version__ = "0.1.0"
