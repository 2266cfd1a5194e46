"""Chance-constrained DC-OPF with constraint-informed uncertainty estimation.

The package covers the full pipeline: grid physics (PTDF), forecast-error
scenario handling, Gaussian/GMM estimation (including the zero-mean EM
variant and the tied-scaled covariance structure), the piecewise-linear
normal-CDF under-estimator, the conic reformulation of the probabilistic
constraints, solving, and out-of-sample risk evaluation.
"""

from .grid import (
    Bus,
    Generator,
    GridCase,
    GridValidationError,
    Line,
    PtdfMatrix,
    builtin_case,
    builtin_case_path,
    compute_ptdf,
    load_case,
    nominal_state,
    realized_state,
    recover_angles,
)
from .scenarios import (
    EtaSamples,
    OmegaSamples,
    ScenarioSet,
    SplitSpec,
    generate_cauchy,
    generate_gaussian,
    ingest_csv,
    split,
    to_eta,
    to_omega,
)
from .estimation import (
    FitReport,
    GmmModel,
    fit_gmm_em,
    fit_mle_gaussian,
    gmm_cdf,
    gmm_loglik,
    gmm_moments,
    transform_classical,
)
from .cdf_approx import PwlCdf, build_pwl, eval_pwl
from .reformulate import (
    ConicProgram,
    FittedInputs,
    MethodSpec,
    audit_solution,
    build_ci_model,
    build_classical_model,
    build_deterministic_model,
    build_gaussian_model,
    build_objective,
    check_mean_conditions,
)
from .solver import DispatchSolution, SolveSettings, solve
from .risk import ExperimentResult, RiskReport, run_experiment, violation_rates
from .config import RunConfig

__version__ = "0.1.0"
