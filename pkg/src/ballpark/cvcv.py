"""Constraint violation cross validation (CVCV).

Label-free choice of the ridge regularizer: split every bag into K parts,
fit on the training parts with the original bounds, and score each
candidate by how badly the held-out parts violate those same bounds.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import INFEASIBLE, BallparkError, BallparkProblem, Bag
from .qp import SolverConfig
from .regression import TWO_STEP, fit_regression
from .repro import thread_count

log = logging.getLogger(__name__)

DEFAULT_GRID = tuple(float(v) for v in np.logspace(-4, 2, 13))


class InvalidFoldError(BallparkError, ValueError):
    pass


@dataclass
class CvcvReport:
    grid: list[float]
    mean_violation: list[float]
    chosen_lambda: float
    folds: int
    per_fold_violations: list[list[float]]  # [fold][grid index]
    method: str = TWO_STEP
    seed: int = 0

    def to_dict(self) -> dict:
        fix = lambda v: None if not math.isfinite(v) else float(v)  # noqa: E731
        return {
            "grid": [float(g) for g in self.grid],
            "mean_violation": [fix(v) for v in self.mean_violation],
            "chosen_lambda": float(self.chosen_lambda),
            "folds": self.folds,
            "per_fold_violations": [[fix(v) for v in row] for row in self.per_fold_violations],
            "method": self.method,
            "seed": self.seed,
        }


def violation(estimated_mean: float, lower: float, upper: float) -> float:
    return max(estimated_mean - upper, 0.0) + max(lower - estimated_mean, 0.0)


def split_bags(bags: Sequence[Bag], folds: int, seed: int = 0):
    """Per fold, ``(train_bags, held_out_bags)``.

    Each bag's members are shuffled and dealt round-robin into ``folds``
    parts. Bags smaller than ``folds`` are not split: they stay whole in
    every training set and never appear held out.
    """
    if folds < 2:
        raise InvalidFoldError(f"need at least 2 folds, got {folds}")
    rng = np.random.default_rng(seed)
    assignment = []
    for bag in bags:
        if len(bag) < folds:
            log.info("bag %r has %d < %d members; kept whole in training", bag.name, len(bag), folds)
            assignment.append(None)
            continue
        members = np.asarray(bag.members)
        perm = members[rng.permutation(members.size)]
        assignment.append([np.sort(perm[k::folds]) for k in range(folds)])
    out = []
    for k in range(folds):
        train, held = [], []
        for bag, parts in zip(bags, assignment):
            if parts is None:
                train.append(bag)
                continue
            rest = np.sort(np.concatenate([p for j, p in enumerate(parts) if j != k]))
            train.append(Bag(bag.name, rest.tolist()))
            held.append(Bag(bag.name, parts[k].tolist()))
        out.append((train, held))
    return out


def held_out_violation(problem: BallparkProblem, predictions: np.ndarray,
                       held_out: Sequence[Bag], floor: float = 0.0) -> float:
    """Mean violation over constraints whose bags all have a held-out part.

    Differences use the difference of held-out means. Ratios use the ratio of
    held-out means; a denominator at or below ``floor`` counts as violating
    by its distance to the floor.
    """
    means = {b.name: float(predictions[b.index].mean()) for b in held_out}
    vals = []
    for c in problem.bounds:
        if c.bag in means:
            vals.append(violation(means[c.bag], c.lower, c.upper))
    for c in problem.diffs:
        if c.bag_hi in means and c.bag_lo in means:
            vals.append(violation(means[c.bag_hi] - means[c.bag_lo], c.lower, c.upper))
    for c in problem.ratios:
        if c.bag_num in means and c.bag_den in means:
            den = means[c.bag_den]
            f = c.positivity_floor if c.positivity_floor is not None else floor
            if den <= f:
                vals.append(f - den)
            else:
                vals.append(violation(means[c.bag_num] / den, c.lower, c.upper))
    return float(np.mean(vals)) if vals else 0.0


def tune_lambda(problem: BallparkProblem, grid: Sequence[float] = DEFAULT_GRID, folds: int = 3,
                seed: int = 0, method: str = TWO_STEP, config: SolverConfig | None = None,
                threads: int | None = None) -> CvcvReport:
    """Pick the grid value with the least mean held-out violation.

    Ties go to the larger value. A cell whose fit ends infeasible scores
    +inf; a grid value infeasible in every fold is never chosen unless all are.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("empty lambda grid")
    if any(not g > 0 for g in grid):
        raise ValueError(f"lambda grid must be positive, got {grid}")
    splits = split_bags(problem.bags, folds, seed)
    cfg = config or SolverConfig()

    def cell(k: int, j: int) -> float:
        train, held = splits[k]
        sub = replace(problem, bags=tuple(train))
        fit = fit_regression(sub, method, regularizer=grid[j], config=cfg)
        if fit.status == INFEASIBLE:
            return math.inf
        pred = sub.design() @ fit.weights
        return held_out_violation(problem, pred, held, cfg.positivity_floor_default)

    cells = [(k, j) for k in range(folds) for j in range(len(grid))]
    n_threads = thread_count(threads)
    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            values = list(pool.map(lambda kj: cell(*kj), cells))
    else:
        values = [cell(k, j) for k, j in cells]
    per_fold = np.array(values, dtype=float).reshape(folds, len(grid))

    mean = np.full(len(grid), math.inf)
    for j in range(len(grid)):
        finite = per_fold[:, j][np.isfinite(per_fold[:, j])]
        if finite.size:
            mean[j] = finite.mean()
    if np.all(np.isinf(mean)):
        chosen = max(grid)
        log.warning("every lambda was infeasible in every fold; defaulting to %g", chosen)
    else:
        best = np.min(mean)
        tol = 1e-12 * max(1.0, abs(best))
        chosen = max(g for g, v in zip(grid, mean) if v <= best + tol)
    return CvcvReport(grid, mean.tolist(), chosen, folds, per_fold.tolist(), method, seed)
