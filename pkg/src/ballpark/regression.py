"""Ballpark regression.

Two estimators share one constraint representation:

* two-step: the joint problem over latent labels ``y`` and weights ``w``.
  The ridge-optimal ``w`` is written in closed form, which leaves a QP in
  ``y``; the weights are then the ridge fit to the optimal ``y``. With
  ``H`` the ridge hat matrix, the y-objective is either the exact
  substitution ``y' (I - H) y / N`` (``"joint"``, the default; equal to
  ``(|y - Phi w|^2 + lam |w|^2) / N``) or the residual-only form
  ``|(I - H) y|^2 / N`` (``"residual"``), which drops the ``|w|^2`` term.
* feasibility: minimum-norm ``w`` whose own bag-mean predictions satisfy
  the constraints. No latent labels.

Infeasible constraint sets are relaxed with one non-negative slack per
constraint row under a linear penalty.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DimensionError,
    FeatureMap,
    INFEASIBLE,
    MAX_ITERATIONS,
    OPTIMAL,
    OPTIMAL_WITH_SLACK,
    BallparkProblem,
    Solution,
    constraint_rows,
    require_valid,
    stack_rows,
)
from .qp import QuadraticProgram, SolverConfig, ridge_closed_form, solve_qp

log = logging.getLogger(__name__)

TWO_STEP = "two-step"
FEASIBILITY = "feasibility"
METHODS = (TWO_STEP, FEASIBILITY)
JOINT = "joint"
RESIDUAL = "residual"
OBJECTIVES = (JOINT, RESIDUAL)
DEFAULT_SLACK_PENALTY = 1e3


@dataclass
class ConstraintCheck:
    id: str
    lhs_value: float
    lower: float
    upper: float
    slack: float = 0.0

    @property
    def violation(self) -> float:
        return max(self.lower - self.lhs_value, self.lhs_value - self.upper, 0.0)

    @property
    def satisfied(self) -> bool:
        return self.violation <= 1e-6 + self.slack


@dataclass
class RegressionFit:
    method: str
    solution: Solution
    regularizer_used: float | None
    constraint_report: list[ConstraintCheck]
    feature_map: FeatureMap = field(default_factory=FeatureMap)
    iterations: int = 0

    @property
    def weights(self) -> np.ndarray:
        return self.solution.weights

    @property
    def status(self) -> str:
        return self.solution.status

    def predict(self, features) -> np.ndarray:
        return predict(self, features)

    def report(self) -> dict:
        """Fit report in the JSON schema used by the CLI."""
        return {
            "method": self.method,
            "lambda": self.regularizer_used,
            "objective": self.solution.objective,
            "status": self.solution.status,
            "constraints": [
                {"id": c.id, "lhs_value": c.lhs_value, "lower": _json_num(c.lower),
                 "upper": _json_num(c.upper), "slack": c.slack}
                for c in self.constraint_report
            ],
            "weights": [float(v) for v in self.solution.weights],
        }


def _json_num(v: float):
    return None if not math.isfinite(v) else float(v)


def predict(fit, features) -> np.ndarray:
    """``f(x) = w' phi(x)``."""
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if fit.weights.shape[0] == 2 else X.reshape(1, -1)
    Phi = fit.feature_map(X)
    if Phi.shape[1] != fit.weights.shape[0]:
        raise DimensionError(
            f"model expects {fit.weights.shape[0] - 1} features, got {X.shape[1]}")
    return Phi @ fit.weights


def default_regularizer(problem: BallparkProblem) -> float:
    """Ridge strength equivalent to the problem's unlabeled cost, N / (2 C_N)."""
    return problem.dataset.n_rows / (2.0 * problem.unlabeled_cost)


def _sample_weights(problem: BallparkProblem) -> np.ndarray | None:
    ds = problem.dataset
    if problem.labeled_cost <= 0 or not ds.labeled_indices:
        return None
    n, n_lab = ds.n_rows, len(ds.labeled_indices)
    s = np.ones(n)
    s[sorted(ds.labeled_indices)] = (problem.labeled_cost / n_lab) / (problem.unlabeled_cost / n)
    return s


def _labeled_pins(problem: BallparkProblem):
    """Equality rows fixing the latent labels of labeled instances."""
    ds = problem.dataset
    if problem.labeled_cost <= 0 or not ds.labeled_indices:
        return np.zeros((0, ds.n_rows)), np.zeros(0)
    idx = np.array(sorted(ds.labeled_indices))
    A = np.zeros((idx.size, ds.n_rows))
    A[np.arange(idx.size), idx] = 1.0
    return A, ds.targets[idx]


def _with_slack(P, q, A, lo, hi, penalty):
    """Extend a QP with one slack per row widening both of its sides."""
    n, m = P.shape[0], A.shape[0]
    P2 = np.zeros((n + m, n + m))
    P2[:n, :n] = P
    q2 = np.concatenate([q, np.full(m, penalty)])
    blocks, lows, highs = [], [], []
    eye = np.eye(m)
    for r in range(m):
        if math.isfinite(lo[r]):
            blocks.append(np.concatenate([A[r], eye[r]]))
            lows.append(lo[r])
            highs.append(math.inf)
        if math.isfinite(hi[r]):
            blocks.append(np.concatenate([A[r], -eye[r]]))
            lows.append(-math.inf)
            highs.append(hi[r])
    A2 = np.vstack(blocks + [np.hstack([np.zeros((m, n)), eye])]) if blocks else \
        np.hstack([np.zeros((m, n)), eye])
    lo2 = np.array(lows + [0.0] * m)
    hi2 = np.array(highs + [math.inf] * m)
    return P2, q2, A2, lo2, hi2


class _Program:
    """One regression QP: variables, objective, constraint rows."""

    def __init__(self, problem: BallparkProblem, method: str, regularizer: float | None,
                 config: SolverConfig, objective: str = JOINT):
        self.problem = problem
        self.method = method
        self.config = config
        ds = problem.dataset
        self.Phi = problem.design()
        self.N = ds.n_rows
        rows = constraint_rows(problem, floor_default=config.positivity_floor_default)
        self.A_y, self.lo, self.hi, self.ids = stack_rows(rows, self.N)
        self.s = _sample_weights(problem)
        pin_A, pin_b = _labeled_pins(problem)
        if method == TWO_STEP:
            lam = regularizer
            if lam is None or not lam > 0:
                raise ValueError(f"two-step needs a positive regularizer, got {lam}")
            if objective not in OBJECTIVES:
                raise ValueError(f"unknown objective {objective!r}; expected one of {OBJECTIVES}")
            self.lam = float(lam)
            self.objective = objective
            # With u = S^1/2 y, the y-objective is u' (I - H_s)^p u / N (p = 1
            # joint, p = 2 residual). Its curvature along the column space of
            # Phi is tiny, (lam / (lam + sigma^2))^p, so ADMM stalls there.
            # Solve in z = (I - H_s)^(p/2) u, where the objective is |z|^2 / N.
            s_half = np.ones(self.N) if self.s is None else np.sqrt(self.s)
            self._s_half = s_half
            U, sig, _ = np.linalg.svd(self.Phi * s_half[:, None], full_matrices=False)
            power = 1 if objective == JOINT else 2
            self._U = U
            self._stretch = (1.0 + sig**2 / self.lam) ** (power / 2) - 1.0
            B, pin_B = self._to_z(self.A_y), self._to_z(pin_A)
            # |z|^2 only grows off the row space of the constraints, so the
            # optimum is z = Q v with Q an orthonormal basis of that space.
            self._Q = np.linalg.qr(np.vstack([B, pin_B]).T)[0]
            r = self._Q.shape[1]
            self.P = (2.0 / self.N) * np.eye(r)
            self.q = np.zeros(r)
            self.A = B @ self._Q
            self.pin_A, self.pin_b = pin_B @ self._Q, pin_b
        elif method == FEASIBILITY:
            self.lam = None
            self.objective = None
            p = self.Phi.shape[1]
            self.P = np.eye(p)
            self.q = np.zeros(p)
            self.const = 0.0
            if pin_A.shape[0]:
                idx = np.array(sorted(ds.labeled_indices))
                coef = 2.0 * problem.labeled_cost / idx.size
                PhiL = self.Phi[idx]
                yL = ds.targets[idx]
                self.P = self.P + coef * PhiL.T @ PhiL
                self.q = -coef * PhiL.T @ yL
                self.const = 0.5 * coef * float(yL @ yL)
            self.A = self.A_y @ self.Phi
            self.pin_A, self.pin_b = np.zeros((0, p)), np.zeros(0)
        else:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")

    def _to_z(self, A_y):
        """Row functionals of y re-expressed on z: ``A_y @ T`` with ``y = T z``."""
        B = A_y / self._s_half[None, :]
        return B + ((B @ self._U) * self._stretch) @ self._U.T

    def latent_from_z(self, v):
        z = self._Q @ v
        u = z + self._U @ (self._stretch * (self._U.T @ z))
        return u / self._s_half

    def solve(self, slack_penalty: float | None):
        n = self.P.shape[0]
        m = self.A.shape[0]
        if slack_penalty is None:
            A = np.vstack([self.A, self.pin_A])
            lo = np.concatenate([self.lo, self.pin_b])
            hi = np.concatenate([self.hi, self.pin_b])
            res = solve_qp(QuadraticProgram(self.P, self.q, A, lo, hi), self.config)
            return res, res.x, np.zeros(m)
        P2, q2, A2, lo2, hi2 = _with_slack(self.P, self.q, self.A, self.lo, self.hi, slack_penalty)
        if self.pin_A.shape[0]:
            pins = np.hstack([self.pin_A, np.zeros((self.pin_A.shape[0], m))])
            A2 = np.vstack([A2, pins])
            lo2 = np.concatenate([lo2, self.pin_b])
            hi2 = np.concatenate([hi2, self.pin_b])
        res = solve_qp(QuadraticProgram(P2, q2, A2, lo2, hi2), self.config)
        return res, res.x[:n], np.maximum(res.x[n:], 0.0)

    def finish(self, res, x, slacks, slack_penalty) -> RegressionFit:
        cfg = self.config
        if self.method == TWO_STEP:
            latent = self.latent_from_z(x)
            weights = ridge_closed_form(self.Phi, latent, self.lam, sample_weight=self.s)
            objective = two_step_objective(self.Phi, latent, self.lam, self.objective, self.s)
            lhs = self.A_y @ latent
        else:
            latent = np.zeros(0)
            weights = x
            objective = 0.5 * float(weights @ self.P @ weights) + float(self.q @ weights) + self.const
            lhs = self.A_y @ (self.Phi @ weights)
        total = float(slacks.sum())
        if slack_penalty is not None:
            objective += slack_penalty * total
        if res.status == INFEASIBLE:
            status = INFEASIBLE
        elif res.status == MAX_ITERATIONS:
            status = MAX_ITERATIONS
        elif slack_penalty is not None and np.max(slacks, initial=0.0) > cfg.abs_tolerance:
            status = OPTIMAL_WITH_SLACK
        else:
            status = OPTIMAL
        checks = [ConstraintCheck(i, float(v), float(lo), float(hi), float(s))
                  for i, v, lo, hi, s in zip(self.ids, lhs, self.lo, self.hi, slacks)]
        solution = Solution(weights, latent, dict(zip(self.ids, map(float, slacks))), objective, status)
        return RegressionFit(self.method, solution, self.lam, checks, self.problem.feature_map,
                             res.iterations)


def two_step_objective(design, latent, regularizer: float, objective: str = JOINT,
                       sample_weight=None) -> float:
    """Value of the two-step y-objective at ``latent`` (no slack term)."""
    Phi = np.asarray(design, dtype=float)
    y = np.asarray(latent, dtype=float)
    w = ridge_closed_form(Phi, y, regularizer, sample_weight=sample_weight)
    sw = np.ones(y.shape[0]) if sample_weight is None else np.asarray(sample_weight, float)
    resid = y - Phi @ w
    if objective == JOINT:
        return float((np.sum(sw * resid**2) + regularizer * (w @ w)) / y.shape[0])
    if objective == RESIDUAL:
        return float(np.sum(sw * resid**2) / y.shape[0])
    raise ValueError(f"unknown objective {objective!r}; expected one of {OBJECTIVES}")


def _fit(problem, method, regularizer, config, slack_penalty, objective=JOINT):
    require_valid(problem)
    cfg = config or SolverConfig()
    prog = _Program(problem, method, regularizer, cfg, objective)
    res, x, slacks = prog.solve(None)
    if res.status != INFEASIBLE:
        return prog.finish(res, x, slacks, None)
    if not cfg.escalate_to_slack:
        log.info("constraints infeasible (%s); slack escalation disabled", res.certificate)
        return prog.finish(res, x, slacks, None)
    log.info("constraints infeasible (%s); refitting with slack penalty %g",
             res.certificate, slack_penalty)
    res, x, slacks = prog.solve(slack_penalty)
    fit = prog.finish(res, x, slacks, slack_penalty)
    if fit.solution.status == OPTIMAL:
        # hard solve declared infeasible, so some slack must be active
        fit.solution.status = OPTIMAL_WITH_SLACK
    return fit


def fit_two_step(problem: BallparkProblem, regularizer: float | None = None,
                 config: SolverConfig | None = None,
                 slack_penalty: float = DEFAULT_SLACK_PENALTY, *,
                 objective: str = JOINT) -> RegressionFit:
    """Latent-label QP followed by the ridge fit to the optimal labels.

    ``regularizer`` defaults to ``N / (2 * unlabeled_cost)``.
    """
    lam = default_regularizer(problem) if regularizer is None else regularizer
    return _fit(problem, TWO_STEP, lam, config, slack_penalty, objective)


def fit_feasibility(problem: BallparkProblem, config: SolverConfig | None = None,
                    slack_penalty: float = DEFAULT_SLACK_PENALTY) -> RegressionFit:
    return _fit(problem, FEASIBILITY, None, config, slack_penalty)


def fit_with_slack(problem: BallparkProblem, method: str = TWO_STEP,
                   regularizer: float | None = None,
                   slack_penalty: float = DEFAULT_SLACK_PENALTY,
                   config: SolverConfig | None = None, *,
                   objective: str = JOINT) -> RegressionFit:
    """Soft-constrained fit: every bound gains ``xi_r >= 0`` on both sides and the
    objective gains ``slack_penalty * sum(xi)``. Always feasible.

    Validation is not enforced here so that malformed constraint sets (for
    instance inverted bounds) still produce a fit with the damage reported
    as slack.
    """
    cfg = config or SolverConfig()
    if method == TWO_STEP and regularizer is None:
        regularizer = default_regularizer(problem)
    prog = _Program(problem, method, regularizer, cfg, objective)
    res, x, slacks = prog.solve(slack_penalty)
    return prog.finish(res, x, slacks, slack_penalty)


def fit_regression(problem: BallparkProblem, method: str = TWO_STEP,
                   regularizer: float | None = None, config: SolverConfig | None = None,
                   slack_penalty: float = DEFAULT_SLACK_PENALTY, *,
                   objective: str = JOINT) -> RegressionFit:
    if method == TWO_STEP:
        return fit_two_step(problem, regularizer, config, slack_penalty, objective=objective)
    if method == FEASIBILITY:
        return fit_feasibility(problem, config, slack_penalty)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
