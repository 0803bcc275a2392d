"""Differentially private conformal prediction.

Mechanism primitives, a private quantile release over a fixed bin grid,
strongly convex ERM trainers with output perturbation, conformal interval
constructors from the non-private split baseline to the fully private
pipeline, and a seeded experiment harness.
"""

from .budget import BudgetOverflowError, PrivacyBudget, compose
from .conformal import (
    CalibrationRecord,
    DifferentialConformalRegressor,
    DpcpRegressor,
    InvalidLevelError,
    PredictionInterval,
    PscpRegressor,
    SplitConformalRegressor,
    empirical_conformal_quantile,
    invert_threshold,
    oracle_interval,
)
from .datagen import ParseError, SchemaError, SyntheticSpec, TabularDataset, gen_synthetic, load_csv
from .erm import (
    LaplaceLocationRegressor,
    LipschitzErmRegressor,
    LocationRegressor,
    PrivateErmRegressor,
    fit_lipschitz_erm,
    sensitivity_bound,
)
from .harness import (
    ExperimentPlan,
    TrialResult,
    coverage_of,
    fig1_plan,
    fig2_plan,
    fig3_plan,
    run_plan,
    summarize,
    symmetric_difference_length,
)
from .mechanisms import (
    ExpMechWeights,
    GaussianCalibration,
    exp_mech_probabilities,
    exp_mech_sample,
    gaussian_calibrate,
    laplace_sample,
)
from .quantile import (
    BinGrid,
    DpqRequest,
    InfeasibleLevelError,
    ScoreVector,
    conformal_index,
    corrected_level,
    dpq_distribution,
    dpq_release,
    dpq_utilities,
    rank_based_grid,
    uniform_grid,
)
from .scores import ScoreFunction, absolute_residual_score, custom_score, one_minus_probability_score

__version__ = "0.1.0"

__all__ = [
    "BinGrid",
    "BudgetOverflowError",
    "CalibrationRecord",
    "DifferentialConformalRegressor",
    "DpcpRegressor",
    "DpqRequest",
    "ExpMechWeights",
    "ExperimentPlan",
    "GaussianCalibration",
    "InfeasibleLevelError",
    "InvalidLevelError",
    "LaplaceLocationRegressor",
    "LipschitzErmRegressor",
    "LocationRegressor",
    "ParseError",
    "PredictionInterval",
    "PrivacyBudget",
    "PrivateErmRegressor",
    "PscpRegressor",
    "SchemaError",
    "ScoreFunction",
    "ScoreVector",
    "SplitConformalRegressor",
    "SyntheticSpec",
    "TabularDataset",
    "TrialResult",
    "absolute_residual_score",
    "compose",
    "conformal_index",
    "corrected_level",
    "coverage_of",
    "custom_score",
    "dpq_distribution",
    "dpq_release",
    "dpq_utilities",
    "empirical_conformal_quantile",
    "exp_mech_probabilities",
    "exp_mech_sample",
    "fig1_plan",
    "fig2_plan",
    "fig3_plan",
    "fit_lipschitz_erm",
    "gaussian_calibrate",
    "gen_synthetic",
    "invert_threshold",
    "laplace_sample",
    "load_csv",
    "one_minus_probability_score",
    "oracle_interval",
    "rank_based_grid",
    "run_plan",
    "sensitivity_bound",
    "summarize",
    "symmetric_difference_length",
    "uniform_grid",
]
