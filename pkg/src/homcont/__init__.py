"""Numerical continuation of homoclinic solutions of nonautonomous
difference equations, with the linear dichotomy machinery (spectra,
projectors, Fredholm indices) and admissibility certificates the global
theory requires."""

from .admissibility import (
    AdmissibilityCertificate,
    LimitSystem,
    check_asymptotically_linear,
    check_contractive,
    check_limit_admissibility,
    check_semilinear,
    green_function,
    kappa_closed_form,
    kappa_green_sum,
    kappa_series,
)
from .continuation import (
    Branch,
    BranchOutcome,
    BranchPoint,
    Classification,
    ContinuationSettings,
    classify,
    continue_branch,
)
from .dichotomy import (
    AsymPeriodic,
    Autonomous,
    DichotomyReport,
    General,
    LinearSystem,
    NotFredholmError,
    Periodic,
    SpectrumReport,
    apply_difference_operator,
    asymptotically_periodic,
    constant_system,
    detect_dichotomy,
    dichotomy_spectrum,
    evolution,
    fredholm_index,
    general_system,
    periodic_system,
    scale,
)
from .models import BUILTIN_NAMES, BuiltinModel, build, from_config, oracle_branch, oracle_solution, seed_homoclinic
from .sequences import (
    DecayEnvelope,
    TruncatedSequence,
    Window,
    check_envelope,
    embed,
    product_distance,
    shift,
    sup_norm,
    zeros,
)
from .solver import (
    Box,
    ConvergenceError,
    DomainError,
    HyperbolicityReport,
    LimitRhs,
    NewtonSettings,
    NonHyperbolicError,
    ParametricModel,
    boundary_conditions,
    hyperbolicity_report,
    jacobian,
    newton_solve,
    residual,
    validate_model,
    variational_system,
)

__version__ = "0.1.0"
