"""Ballpark classification.

Relaxed latent labels ``y`` in [-1, 1] and a linear classifier ``w`` are fit
by alternating minimisation of

    J(w, y) = 1/2 |w|^2 + sum_i c_i max(0, 1 - y_i w' phi(x_i))

with ``c_i = C / N`` on unlabeled rows, subject to bounds on positive
proportions ``p_k = mean_{B_k}(y) / 2 + 1/2`` and on their differences.
For fixed ``y`` this is a linear SVM (solved in the dual by coordinate
descent); for fixed ``w`` it is a linear program in ``y``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .core import (
    INFEASIBLE,
    OPTIMAL,
    OPTIMAL_WITH_SLACK,
    BallparkProblem,
    FeatureMap,
    InvalidLabelError,
    constraint_rows,
    require_valid,
    stack_rows,
)
from .qp import SolverConfig
from .regression import DEFAULT_SLACK_PENALTY, ConstraintCheck, predict

log = logging.getLogger(__name__)

MAX_ROUNDS = 50


@dataclass
class ClassificationFit:
    weights: np.ndarray
    latent_labels: np.ndarray
    iterations: int
    objective_trace: list[float]
    status: str
    constraint_report: list[ConstraintCheck] = field(default_factory=list)
    p_hat: dict[str, float] = field(default_factory=dict)
    slacks: dict[str, float] = field(default_factory=dict)
    feature_map: FeatureMap = field(default_factory=FeatureMap)
    unlabeled_cost: float = 1.0

    @property
    def objective(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else math.nan

    def predict(self, features) -> np.ndarray:
        return predict_class(self, features)

    def report(self) -> dict:
        fix = lambda v: None if not math.isfinite(v) else float(v)  # noqa: E731
        return {
            "method": "classification",
            "lambda": None,
            "cost": self.unlabeled_cost,
            "objective": self.objective,
            "status": self.status,
            "iterations": self.iterations,
            "objective_trace": self.objective_trace,
            "constraints": [
                {"id": c.id, "lhs_value": c.lhs_value, "lower": fix(c.lower),
                 "upper": fix(c.upper), "slack": c.slack}
                for c in self.constraint_report
            ],
            "p_hat": self.p_hat,
            "weights": [float(v) for v in self.weights],
        }


def predict_class(fit, features) -> np.ndarray:
    """``sign(w' phi(x))`` with ties sent to +1."""
    scores = predict(fit, features)
    return np.where(scores >= 0, 1, -1)


def hinge_objective(w, y, Phi, cost) -> float:
    margins = y * (Phi @ w)
    return 0.5 * float(w @ w) + float(cost @ np.maximum(0.0, 1.0 - margins))


def _svm_dual_cd(Phi, y, cost, alpha, tol=1e-8, max_epochs=2000, seed=0):
    """Linear SVM with per-row box ``0 <= alpha_i <= cost_i`` by dual coordinate descent.

    Rows are ``psi_i = y_i phi_i``; ``w = sum alpha_i psi_i``.
    """
    Psi = Phi * y[:, None]
    sq = np.einsum("ij,ij->i", Psi, Psi)
    active = np.flatnonzero(sq > 0)
    alpha = np.where(sq > 0, np.clip(alpha, 0.0, cost), 0.0)
    w = Psi.T @ alpha
    rng = np.random.default_rng(seed)
    for _ in range(max_epochs):
        worst = 0.0
        for i in rng.permutation(active):
            g = Psi[i] @ w - 1.0
            a = alpha[i]
            # projected gradient, for the stopping test
            if a <= 0.0:
                pg = min(g, 0.0)
            elif a >= cost[i]:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg == 0.0:
                continue
            worst = max(worst, abs(pg))
            new = min(max(a - g / sq[i], 0.0), cost[i])
            if new != a:
                w += (new - a) * Psi[i]
                alpha[i] = new
        if worst < tol:
            break
    return w, alpha


class _LabelStep:
    """The y half-step as an LP over ``[y, t, xi]``."""

    def __init__(self, A, lo, hi, cost, fixed, fixed_values, slack_penalty):
        self.A, self.lo, self.hi = A, lo, hi
        self.cost, self.fixed, self.fixed_values = cost, fixed, fixed_values
        self.penalty = slack_penalty
        n = cost.size
        self.y_bounds = [(v, v) if f else (-1.0, 1.0) for f, v in zip(fixed, fixed_values)]
        fin_lo, fin_hi = np.isfinite(lo), np.isfinite(hi)
        self.side_rows = np.concatenate([np.flatnonzero(fin_hi), np.flatnonzero(fin_lo)])
        self.side_sign = np.concatenate([np.ones(fin_hi.sum()), -np.ones(fin_lo.sum())])
        self.side_rhs = np.concatenate([hi[fin_hi], -lo[fin_lo]])
        self.n = n

    def _constraint_block(self, with_slack):
        n, m = self.n, self.A.shape[0]
        As = sparse.csr_matrix(self.A[self.side_rows] * self.side_sign[:, None])
        blocks = [As, sparse.csr_matrix((As.shape[0], n))]
        if with_slack:
            blocks.append(-sparse.csr_matrix(
                (np.ones(self.side_rows.size), (np.arange(self.side_rows.size), self.side_rows)),
                shape=(self.side_rows.size, m)))
        return sparse.hstack(blocks, format="csr")

    def solve(self, margins, with_slack):
        """Minimise ``sum c_i t_i (+ penalty sum xi)``, ``t_i >= 1 - m_i y_i``."""
        n, m = self.n, self.A.shape[0]
        k = m if with_slack else 0
        c = np.concatenate([self.cost, np.full(k, self.penalty)])
        c = np.concatenate([np.zeros(n), c])
        hinge = sparse.hstack([sparse.diags(-margins), -sparse.identity(n),
                               sparse.csr_matrix((n, k))], format="csr")
        A_ub = sparse.vstack([hinge, self._constraint_block(with_slack)], format="csr")
        b_ub = np.concatenate([-np.ones(n), self.side_rhs])
        bounds = self.y_bounds + [(0.0, None)] * (n + k)
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if res.status != 0:
            return None
        x = res.x
        return np.clip(x[:n], -1.0, 1.0), (np.maximum(x[2 * n:], 0.0) if with_slack else np.zeros(m))

    def project(self, y0, with_slack):
        """Feasible labels closest to ``y0`` in L1 (plus slack if allowed)."""
        n, m = self.n, self.A.shape[0]
        k = m if with_slack else 0
        c = np.concatenate([np.zeros(n), np.ones(n), np.full(k, self.penalty)])
        I = sparse.identity(n)
        dev = sparse.vstack([sparse.hstack([I, -I, sparse.csr_matrix((n, k))]),
                             sparse.hstack([-I, -I, sparse.csr_matrix((n, k))])])
        A_ub = sparse.vstack([dev, self._constraint_block(with_slack)], format="csr")
        b_ub = np.concatenate([y0, -y0, self.side_rhs])
        bounds = self.y_bounds + [(0.0, None)] * (n + k)
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if res.status != 0:
            return None
        x = res.x
        return np.clip(x[:n], -1.0, 1.0), (np.maximum(x[2 * n:], 0.0) if with_slack else np.zeros(m))


def _midpoint_start(problem: BallparkProblem, n: int) -> np.ndarray:
    total = np.zeros(n)
    count = np.zeros(n)
    bags = problem.bag_by_name()
    for c in problem.bounds:
        if c.bag not in bags:
            continue
        lo = c.lower if math.isfinite(c.lower) else 0.0
        hi = c.upper if math.isfinite(c.upper) else 1.0
        idx = bags[c.bag].index
        total[idx] += 2 * (0.5 * (lo + hi)) - 1
        count[idx] += 1
    return np.where(count > 0, total / np.maximum(count, 1), 0.0)


def _costs(problem: BallparkProblem, C: float):
    ds = problem.dataset
    n = ds.n_rows
    cost = np.full(n, C / n)
    fixed = np.zeros(n, dtype=bool)
    values = np.zeros(n)
    if problem.labeled_cost > 0 and ds.labeled_indices:
        idx = np.array(sorted(ds.labeled_indices))
        labels = ds.targets[idx]
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise InvalidLabelError("classification labels must be -1 or +1")
        cost[idx] = problem.labeled_cost / idx.size
        fixed[idx] = True
        values[idx] = labels
    return cost, fixed, values


def fit_classifier(problem: BallparkProblem, unlabeled_cost: float | None = None,
                   config: SolverConfig | None = None,
                   slack_penalty: float = DEFAULT_SLACK_PENALTY,
                   max_rounds: int = MAX_ROUNDS) -> ClassificationFit:
    """Alternate w- and y-steps until the relative decrease falls below
    ``config.rel_tolerance`` or ``max_rounds`` rounds have run.

    ``objective_trace`` holds J after every half-step. A half-step that
    would raise J (solver round-off) is discarded.
    """
    require_valid(problem)
    cfg = config or SolverConfig()
    C = problem.unlabeled_cost if unlabeled_cost is None else float(unlabeled_cost)
    if not C > 0:
        raise ValueError(f"cost must be positive, got {C}")
    ds = problem.dataset
    n = ds.n_rows
    Phi = problem.design()
    rows = constraint_rows(problem, proportions=True)
    A, lo, hi, ids = stack_rows(rows, n)
    cost, fixed, values = _costs(problem, C)
    step = _LabelStep(A, lo, hi, cost, fixed, values, slack_penalty)

    y0 = np.where(fixed, values, _midpoint_start(problem, n))
    with_slack = False
    start = step.project(y0, False)
    if start is None:
        if not cfg.escalate_to_slack:
            log.info("proportion constraints infeasible; slack escalation disabled")
            return ClassificationFit(np.zeros(Phi.shape[1]), y0, 0, [], INFEASIBLE,
                                     feature_map=problem.feature_map, unlabeled_cost=C)
        log.info("proportion constraints infeasible; refitting with slack penalty %g", slack_penalty)
        with_slack = True
        start = step.project(y0, True)
    y, xi = start

    def J(w, y, xi):
        return hinge_objective(w, y, Phi, cost) + (slack_penalty * float(xi.sum()) if with_slack else 0.0)

    alpha = np.zeros(n)
    w = np.zeros(Phi.shape[1])
    trace: list[float] = []
    current = J(w, y, xi)
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        before = current
        w_new, alpha_new = _svm_dual_cd(Phi, y, cost, alpha, seed=rounds)
        val = J(w_new, y, xi)
        if val <= current:
            w, alpha, current = w_new, alpha_new, val
        trace.append(current)
        out = step.solve(y * 0 + Phi @ w, with_slack)
        if out is not None:
            val = J(w, out[0], out[1])
            if val <= current:
                y, xi = out
                current = val
        trace.append(current)
        if before - current <= cfg.rel_tolerance * max(abs(before), 1e-12):
            break

    lhs = A @ y
    slacks = xi if with_slack else np.zeros(len(ids))
    checks = [ConstraintCheck(i, float(v), float(l), float(u), float(s))
              for i, v, l, u, s in zip(ids, lhs, lo, hi, slacks)]
    status = OPTIMAL_WITH_SLACK if with_slack else OPTIMAL
    p_hat = {b.name: float(y[b.index].mean() / 2 + 0.5) for b in problem.bags}
    return ClassificationFit(w, y, rounds, trace, status, checks, p_hat,
                             dict(zip(ids, map(float, slacks))), problem.feature_map, C)
