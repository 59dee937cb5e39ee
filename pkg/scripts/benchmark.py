"""Boston-scale benchmark: Ballpark (two-step, feasibility) against ridge with label budgets.

    python scripts/benchmark.py --seeds 10 --out results
"""

import os

import numpy as np

from ballpark.evaluation import kfold_eval, report_rows, ridge_baseline, write_tidy_csv
from ballpark.regression import FEASIBILITY, TWO_STEP
from ballpark.synthetic import boston_scale_problem

from _common import parser, setup

BUDGETS = (10, 25, 50, 100, 200, 400)


def main():
    p = parser(__doc__.splitlines()[0])
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--budgets", type=lambda s: [int(v) for v in s.split(",")], default=list(BUDGETS))
    args = p.parse_args()
    setup(args)
    rows, table = [], {}
    for seed in range(args.seeds):
        problem, data = boston_scale_problem(seed, args.epsilon)
        for name, method, lam in (("two-step", TWO_STEP, "cvcv"), ("feasibility", FEASIBILITY, None)):
            rep = kfold_eval(problem, method, folds=args.folds, seed=seed, regularizer=lam,
                             threads=args.threads)
            rows += report_rows(name, rep, "seed", seed)
            table.setdefault(name, []).append(rep.mean)
        for m in args.budgets:
            rep = ridge_baseline(data.dataset, m, folds=args.folds, seed=seed)
            rows += report_rows(f"ridge-{m}", rep, "seed", seed)
            table.setdefault(f"ridge-{m}", []).append(rep.mean)
        print(f"seed {seed}: " + ", ".join(f"{k} {v[-1]:.3f}" for k, v in table.items()), flush=True)
    write_tidy_csv(os.path.join(args.out, "benchmark.csv"), rows)
    print("\nmean RMSE over seeds")
    for k, v in table.items():
        print(f"  {k:<12} {np.mean(v):7.3f}  (sd {np.std(v):.3f})")
    ours = np.array(table["two-step"])
    for m in args.budgets:
        wins = int(np.sum(ours < np.array(table[f"ridge-{m}"])))
        print(f"  two-step beats ridge-{m} on {wins}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
