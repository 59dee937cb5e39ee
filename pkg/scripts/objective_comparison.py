"""Two-step with the joint and the residual-only y-objective, against feasibility.

The residual-only form drops the weight-norm term of the joint program; this
script shows what that costs on the Boston-scale benchmark.

    python scripts/objective_comparison.py --seeds 5
"""

import os

import numpy as np

from ballpark.evaluation import EvalReport, fold_indices, metrics, report_rows, write_tidy_csv
from ballpark.core import restrict_to_rows
from ballpark.regression import FEASIBILITY, JOINT, RESIDUAL, TWO_STEP, fit_regression
from ballpark.synthetic import boston_scale_problem

from _common import parser, setup


def evaluate(problem, folds, seed, method, lam, objective):
    ds = problem.dataset
    scores = []
    for k, test in enumerate(fold_indices(ds.n_rows, folds, seed)):
        train = np.setdiff1d(np.arange(ds.n_rows), test)
        sub, _ = restrict_to_rows(problem, train)
        fit = fit_regression(sub, method, regularizer=lam, objective=objective)
        scores.append(metrics(fit.predict(ds.features[test]), ds.targets[test]))
    return EvalReport.from_scores("rmse", scores, {"method": method, "lambda": lam, "objective": objective,
                                                   "seed": seed, "folds": folds})


def main():
    p = parser(__doc__.splitlines()[0])
    p.add_argument("--lambdas", type=lambda s: [float(v) for v in s.split(",")], default=[0.01, 1.0, 100.0])
    args = p.parse_args()
    setup(args)
    rows, table = [], {}
    for seed in range(args.seeds):
        problem, _ = boston_scale_problem(seed)
        runs = [(f"{obj}-{lam:g}", TWO_STEP, lam, obj) for obj in (JOINT, RESIDUAL) for lam in args.lambdas]
        runs.append(("feasibility", FEASIBILITY, None, JOINT))
        for name, method, lam, obj in runs:
            rep = evaluate(problem, args.folds, seed, method, lam, obj)
            rows += report_rows(name, rep, "seed", seed)
            table.setdefault(name, []).append(rep.mean)
        print(f"seed {seed} done", flush=True)
    write_tidy_csv(os.path.join(args.out, "objective_comparison.csv"), rows)
    for k, v in table.items():
        print(f"{k:<16} mean RMSE {np.mean(v):.3f}")


if __name__ == "__main__":
    main()
