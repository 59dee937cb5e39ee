"""Ballpark learning: fit models from loose constraints on bag-level label averages."""

from .classification import ClassificationFit, fit_classifier, predict_class
from .core import (
    Bag,
    BallparkProblem,
    BoundConstraint,
    ConstraintSet,
    Dataset,
    DiffConstraint,
    FeatureMap,
    RatioConstraint,
    Solution,
    validate_problem,
)
from .cvcv import CvcvReport, tune_lambda
from .qp import QuadraticProgram, SolverConfig, ridge_closed_form, solve_qp
from .regression import (
    RegressionFit,
    fit_feasibility,
    fit_regression,
    fit_two_step,
    fit_with_slack,
    predict,
)

__all__ = [
    "Bag", "BallparkProblem", "BoundConstraint", "ClassificationFit", "ConstraintSet",
    "CvcvReport", "Dataset", "DiffConstraint", "FeatureMap", "QuadraticProgram",
    "RatioConstraint", "RegressionFit", "Solution", "SolverConfig", "fit_classifier",
    "fit_feasibility", "fit_regression", "fit_two_step", "fit_with_slack", "predict",
    "predict_class", "ridge_closed_form", "solve_qp", "tune_lambda", "validate_problem",
]
__version__ = "0.1.0"
