"""Cross-validated evaluation, ridge baselines and sensitivity sweeps."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .core import INFEASIBLE, BallparkProblem, Dataset, restrict_to_rows
from .cvcv import DEFAULT_GRID, tune_lambda
from .qp import SolverConfig, ridge_closed_form
from .regression import TWO_STEP, fit_regression, fit_with_slack
from .repro import fingerprint, subseed, substream, thread_count

log = logging.getLogger(__name__)

METRICS = ("rmse", "mae", "accuracy")
RIDGE_GRID = tuple(float(v) for v in np.logspace(-8, 4, 25))
SWEEP_PARAMETERS = ("epsilon", "b_l", "d_l", "lambda")


def metrics(predictions, truth, metric: str = "rmse") -> float:
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} predictions, {t.size} targets")
    if p.size == 0:
        raise ValueError("no predictions")
    if metric == "rmse":
        return float(np.sqrt(np.mean((p - t) ** 2)))
    if metric == "mae":
        return float(np.mean(np.abs(p - t)))
    if metric == "accuracy":
        return float(np.mean(np.sign(p) == np.sign(t)))
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


@dataclass
class EvalReport:
    metric: str
    folds: int
    per_fold: list[float]
    mean: float
    std: float
    config_fingerprint: str
    details: dict = field(default_factory=dict)

    @classmethod
    def from_scores(cls, metric, scores, config, details=None) -> "EvalReport":
        s = np.asarray(scores, dtype=float)
        return cls(metric, len(scores), [float(v) for v in s], float(np.mean(s)), float(np.std(s)),
                   fingerprint(config), details or {})

    def to_dict(self) -> dict:
        return {"metric": self.metric, "folds": self.folds, "per_fold": self.per_fold,
                "mean": self.mean, "std": self.std,
                "config_fingerprint": self.config_fingerprint, "details": self.details}


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded partition of ``range(n)`` into ``folds`` near-equal test folds."""
    if folds < 2:
        raise ValueError(f"need at least 2 folds, got {folds}")
    if folds > n:
        raise ValueError(f"{folds} folds for {n} rows")
    perm = substream(seed, "folds").permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def _map(fn, items, threads):
    n = thread_count(threads)
    if n > 1 and len(items) > 1:
        with ThreadPoolExecutor(n) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def kfold_eval(problem: BallparkProblem, method: str = TWO_STEP, metric: str = "rmse",
               folds: int = 5, seed: int = 0, regularizer: float | str | None = "cvcv",
               cvcv_folds: int = 3, cvcv_grid: Sequence[float] = DEFAULT_GRID,
               config: SolverConfig | None = None, threads: int | None = None) -> EvalReport:
    """K-fold test error of a Ballpark fit against held-out ground truth.

    Per fold, bags are intersected with the training rows (bounds reused as
    given) and bags left empty are dropped. ``regularizer`` is a number, None
    for the problem's default, or ``"cvcv"`` to tune it on each training fold.
    """
    ds = problem.dataset
    if ds.targets is None:
        raise ValueError("kfold_eval needs ground-truth targets")
    parts = fold_indices(ds.n_rows, folds, seed)
    cfg = config or SolverConfig()
    tune = isinstance(regularizer, str)
    if tune and regularizer != "cvcv":
        raise ValueError(f"regularizer must be a number, None or 'cvcv', got {regularizer!r}")

    def one(k):
        test = parts[k]
        train = np.sort(np.concatenate([p for j, p in enumerate(parts) if j != k]))
        sub, diags = restrict_to_rows(problem, train)
        for d in diags:
            log.info("fold %d: %s", k, d)
        lam = regularizer
        if tune:
            lam = tune_lambda(sub, cvcv_grid, cvcv_folds, subseed(seed, f"cvcv/{k}"), method,
                              cfg).chosen_lambda
        fit = fit_regression(sub, method, regularizer=lam, config=cfg)
        if fit.status == INFEASIBLE:
            return math.nan, lam, fit.status, diags
        pred = fit.predict(ds.features[test])
        return metrics(pred, ds.targets[test], metric), lam, fit.status, diags

    results = _map(one, list(range(folds)), threads)
    config_dict = {"kind": "kfold", "method": method, "metric": metric, "folds": folds,
                   "seed": seed, "regularizer": regularizer, "cvcv_folds": cvcv_folds,
                   "cvcv_grid": list(cvcv_grid), "n": ds.n_rows,
                   "constraints": problem.n_constraints}
    details = {"lambda": [r[1] for r in results], "status": [r[2] for r in results],
               "diagnostics": [r[3] for r in results]}
    return EvalReport.from_scores(metric, [r[0] for r in results], config_dict, details)


def ridge_with_intercept(X, y, lam: float):
    """Ridge on centred data; the intercept is not penalised."""
    xm, ym = X.mean(axis=0), y.mean()
    w = ridge_closed_form(X - xm, y - ym, lam)
    return w, float(ym - xm @ w)


def _inner_cv_lambda(X, y, grid, folds, rng) -> float:
    k = min(folds, X.shape[0])
    parts = np.array_split(rng.permutation(X.shape[0]), k)
    best, best_err = grid[0], math.inf
    for lam in grid:
        err = 0.0
        for j in range(k):
            te = parts[j]
            tr = np.concatenate([p for i, p in enumerate(parts) if i != j])
            w, b = ridge_with_intercept(X[tr], y[tr], lam)
            err += float(np.sum((X[te] @ w + b - y[te]) ** 2))
        if err <= best_err:
            best, best_err = lam, err
    return best


def ridge_baseline(dataset: Dataset, label_budget: int, lambda_grid: Sequence[float] = RIDGE_GRID,
                   folds: int = 5, seed: int = 0, metric: str = "rmse",
                   inner_folds: int = 3) -> EvalReport:
    """Supervised ridge trained on ``label_budget`` random training rows per fold.

    The regularizer is chosen by inner ``inner_folds``-fold CV on those rows.
    """
    if label_budget < 2:
        raise ValueError(f"label budget must be at least 2, got {label_budget}")
    if dataset.targets is None:
        raise ValueError("ridge_baseline needs targets")
    parts = fold_indices(dataset.n_rows, folds, seed)
    X, y = dataset.features, dataset.targets
    scores, lams = [], []
    for k, test in enumerate(parts):
        train = np.sort(np.concatenate([p for j, p in enumerate(parts) if j != k]))
        if label_budget > train.size:
            raise ValueError(f"label budget {label_budget} exceeds training fold size {train.size}")
        rng = substream(seed, f"ridge/{label_budget}/{k}")
        rows = np.sort(rng.choice(train, size=label_budget, replace=False))
        lam = _inner_cv_lambda(X[rows], y[rows], list(lambda_grid), inner_folds, rng)
        w, b = ridge_with_intercept(X[rows], y[rows], lam)
        scores.append(metrics(X[test] @ w + b, y[test], metric))
        lams.append(lam)
    config = {"kind": "ridge", "budget": label_budget, "grid": list(lambda_grid), "folds": folds,
              "seed": seed, "metric": metric, "inner_folds": inner_folds, "n": dataset.n_rows}
    return EvalReport.from_scores(metric, scores, config, {"lambda": lams})


@dataclass
class SweepRow:
    parameter: str
    value: float
    report: EvalReport
    feasible: bool
    total_slack: float


def sweep(template: Callable[[float], BallparkProblem], parameter: str, values: Sequence[float],
          folds: int = 5, seed: int = 0, method: str = TWO_STEP, metric: str = "rmse",
          regularizer: float | str | None = None, config: SolverConfig | None = None,
          threads: int | None = None) -> list[SweepRow]:
    """Evaluate one problem per parameter value.

    ``template(value)`` builds the problem; for ``parameter == "lambda"`` the
    value is the regularizer instead. Each row records whether the full
    constraint set is feasible and the total slack a soft fit needs; fits in
    infeasible rows fall back to slack.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"unknown sweep parameter {parameter!r}; expected one of {SWEEP_PARAMETERS}")
    values = list(values)
    if not values:
        raise ValueError("no sweep values")
    base = config or SolverConfig()
    strict = replace(base, escalate_to_slack=False)

    def row(i):
        v = values[i]
        problem = template(v)
        lam = v if parameter == "lambda" else regularizer
        fit_lam = None if isinstance(lam, str) else lam
        hard = fit_regression(problem, method, regularizer=fit_lam, config=strict)
        feasible = hard.status != INFEASIBLE
        slack = 0.0
        if not feasible:
            slack = fit_with_slack(problem, method, regularizer=fit_lam, config=base).solution.total_slack
        rep = kfold_eval(problem, method, metric, folds, seed, lam, config=base, threads=1)
        return SweepRow(parameter, float(v), rep, feasible, float(slack))

    return _map(row, list(range(len(values))), threads)


TIDY_FIELDS = ("experiment", "parameter", "value", "fold", "metric", "score", "feasible",
               "total_slack", "config_fingerprint")


def tidy_rows(experiment: str, rows: Sequence[SweepRow]) -> list[dict]:
    out = []
    for r in rows:
        for k, score in enumerate(r.report.per_fold):
            out.append({"experiment": experiment, "parameter": r.parameter, "value": r.value,
                        "fold": k, "metric": r.report.metric, "score": score,
                        "feasible": r.feasible, "total_slack": r.total_slack,
                        "config_fingerprint": r.report.config_fingerprint})
    return out


def report_rows(experiment: str, report: EvalReport, parameter: str = "", value=None) -> list[dict]:
    return [{"experiment": experiment, "parameter": parameter, "value": value, "fold": k,
             "metric": report.metric, "score": s, "feasible": True, "total_slack": 0.0,
             "config_fingerprint": report.config_fingerprint}
            for k, s in enumerate(report.per_fold)]


def write_tidy_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TIDY_FIELDS, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _csv_value(r.get(k)) for k in TIDY_FIELDS})


def _csv_value(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v
