"""Weighted carre-du-champ toolkit.

Numerics for diffusion operators L = Laplacian - grad U . grad with a
multiplicative weight W folded into the carre du champ: the weighted forms
GammaW(f, g) = Gamma(f, g) + W^2 f g and their iterated Gamma2W, curvature
constants obtained by global minimization, and Monte Carlo / quadrature
verification of the semigroup inequalities those constants imply.
"""

from .field_expr import (
    DomainError,
    FieldError,
    Jet,
    ParseError,
    ProblemSpec,
    ScalarField,
    const_field,
    coord_field,
    dot_field,
    eval_jet,
    finite_diff_jet,
    normsq_field,
    parse_field,
)
from .gamma_calculus import (
    GammaPointReport,
    WeightVanishesError,
    apply_L,
    apply_L_symbolic,
    gamma,
    gamma2,
    gamma2_w,
    gamma2_w_definitional,
    gamma_integrand,
    gamma_w,
    point_report,
    sqrt_defect,
)
from .curvature_bounds import (
    BoundEstimate,
    SearchConfig,
    ViolationReport,
    check_pointwise_cd,
    estimate_c,
    estimate_gamma,
    estimate_rho,
)
from .semigroup_mc import (
    AggregatePathFailure,
    GaussianNoise,
    GradEstimate,
    MCConfig,
    MCEstimate,
    PathBlowUpError,
    ZeroNoise,
    em_path,
    estimate_fk_term,
    estimate_grad_Qt,
    estimate_Qt,
    estimate_Qt_sq,
    mehler_fk_term,
    mehler_grad_Qt,
    mehler_Qt,
    taylor_Qt,
)
from .verifier import (
    CaseResult,
    OptimalityTable,
    VerificationReport,
    battery,
    degenerate_w_check,
    exp_field,
    optimality_study,
    verify_commutation,
    verify_sqrt_commutation,
    verify_variance,
)
from .presets import (
    gaussian_potential,
    gaussian_problem,
    make_problem,
    pq_potential,
    pq_problem,
    pq_weight,
    sqrt1sq_weight,
    zero_weight,
)
from .config import ConfigError, RunConfig

__version__ = "0.1.0"

__all__ = [
    "AggregatePathFailure",
    "BoundEstimate",
    "CaseResult",
    "ConfigError",
    "DomainError",
    "FieldError",
    "GammaPointReport",
    "GaussianNoise",
    "GradEstimate",
    "Jet",
    "MCConfig",
    "MCEstimate",
    "OptimalityTable",
    "ParseError",
    "PathBlowUpError",
    "ProblemSpec",
    "RunConfig",
    "ScalarField",
    "SearchConfig",
    "VerificationReport",
    "ViolationReport",
    "WeightVanishesError",
    "ZeroNoise",
    "apply_L",
    "apply_L_symbolic",
    "battery",
    "check_pointwise_cd",
    "const_field",
    "coord_field",
    "degenerate_w_check",
    "dot_field",
    "em_path",
    "estimate_c",
    "estimate_fk_term",
    "estimate_gamma",
    "estimate_grad_Qt",
    "estimate_Qt",
    "estimate_Qt_sq",
    "estimate_rho",
    "eval_jet",
    "exp_field",
    "finite_diff_jet",
    "gamma",
    "gamma2",
    "gamma2_w",
    "gamma2_w_definitional",
    "gamma_integrand",
    "gamma_w",
    "gaussian_potential",
    "gaussian_problem",
    "make_problem",
    "mehler_fk_term",
    "mehler_grad_Qt",
    "mehler_Qt",
    "normsq_field",
    "optimality_study",
    "parse_field",
    "point_report",
    "pq_potential",
    "pq_problem",
    "pq_weight",
    "sqrt1sq_weight",
    "sqrt_defect",
    "taylor_Qt",
    "verify_commutation",
    "verify_sqrt_commutation",
    "verify_variance",
    "zero_weight",
]
