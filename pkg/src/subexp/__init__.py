"""Numerical toolkit for heavy-tailed densities whose convolution tails are
dominated by one big jump: class-membership verification, n-fold convolution
engines (spectral and log-space), uniform-in-n tail bounds with constructive
certificates, radial convolution in R^d, and the nonlocal heat-kernel series.
"""

__version__ = "0.1.0"

from .densities import (
    Affine,
    DensitySpec,
    Domain,
    Family,
    HFamily,
    LeftPart,
    Splice,
    TailMetadata,
    burr,
    cauchy,
    custom,
    default_metadata,
    evaluate,
    evaluate_array,
    exponential,
    fractional_exp,
    gaussian,
    l1_norm,
    levy,
    log_evaluate,
    log_evaluate_array,
    log_normal_type,
    near_exponential,
    normalize,
    pareto,
    polynomial,
    spec_from_dict,
    spec_from_json,
    spec_to_dict,
    spec_to_json,
    student_t,
    weibull_type,
)
from .errors import (
    AlphaTooSmallError,
    BudgetExceededError,
    DimensionMismatchError,
    DivergentError,
    DomainError,
    HTooLargeError,
    NoFeasibleLambdaError,
    NonFiniteError,
    SpacingMismatchError,
    SubexpError,
    UnderResolvedError,
)
from .grids import GridFunction, TailModel, convolve, normalize_grid, sample, self_convolve_n
from .logconv import FoldFamily, build_folds, pair_convolve_log
from .membership import ClassReport, CheckResult, Verdict, classify
from .radial import RadialProfile, radial_convolve, radial_self_convolve_n, sample_radial
from .asymptotics import (
    BoundCertificate,
    KestenFit,
    RatioDiagnostic,
    alpha_threshold_polynomial,
    certified_bound_propagation,
    kesten_fit,
    kesten_verify,
    multi_d_kesten_verify,
    ratio_diagnostic,
    weighted_limit_diagnostic,
)
from .heat import HeatKernelResult, compute_phi, solve_u, tail_asymptotic_check
