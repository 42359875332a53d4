"""flexbal: covariate balancing weights with jointly optimized
regularization and finite-sample confidence certificates."""

__version__ = "0.1.0"

from .core import (
    BalanceProblem,
    ImbalanceReport,
    SimplexWeights,
    effective_sample_size,
    hoeffding_radius,
    imbalance,
    weighted_estimate,
    weighted_mean,
)
from .divergence import DivergenceKind, DivergenceSpec, cbps_f, conjugate, divergence
from .errors import (
    DataError,
    DegenerateTargetError,
    FlexbalError,
    PrecursorInfeasibleError,
    SolverFailure,
    UsageError,
    ValidationError,
)
from .fbal import FbalConfig, FbalSolution, asymmetric_interval, fbal_objective, fulcrum, solve_fbal
from .inference import (
    AteReport,
    EstimateMethod,
    EstimateReport,
    estimate_ate,
    naive_radius,
    select_k,
)
from .lp import LpSolution, LpStatus, solve_lp
from .plain_balance import BalanceResult, PlainBalanceConfig, solve_plain, sweep_lambda
from .precursor import BetaInputs, BetaResult, compute_beta, compute_beta_relaxed
from .simgen import SimData, SimKind, SimSpec, generate

__all__ = [
    "BalanceProblem",
    "ImbalanceReport",
    "SimplexWeights",
    "effective_sample_size",
    "hoeffding_radius",
    "imbalance",
    "weighted_estimate",
    "weighted_mean",
    "DivergenceKind",
    "DivergenceSpec",
    "cbps_f",
    "conjugate",
    "divergence",
    "DataError",
    "DegenerateTargetError",
    "FlexbalError",
    "PrecursorInfeasibleError",
    "SolverFailure",
    "UsageError",
    "ValidationError",
    "FbalConfig",
    "FbalSolution",
    "asymmetric_interval",
    "fbal_objective",
    "fulcrum",
    "solve_fbal",
    "AteReport",
    "EstimateMethod",
    "EstimateReport",
    "estimate_ate",
    "naive_radius",
    "select_k",
    "LpSolution",
    "LpStatus",
    "solve_lp",
    "BalanceResult",
    "PlainBalanceConfig",
    "solve_plain",
    "sweep_lambda",
    "BetaInputs",
    "BetaResult",
    "compute_beta",
    "compute_beta_relaxed",
    "SimData",
    "SimKind",
    "SimSpec",
    "generate",
    "__version__",
]
