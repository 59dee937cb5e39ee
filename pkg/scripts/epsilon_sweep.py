"""Test RMSE as the synthetic constraints loosen (epsilon sweep).

    python scripts/epsilon_sweep.py --values 0,0.1,0.3,0.5,1.0
"""

import os

import numpy as np

from ballpark.evaluation import sweep, tidy_rows, write_tidy_csv
from ballpark.synthetic import boston_scale_problem

from _common import parser, setup


def main():
    p = parser(__doc__.splitlines()[0])
    p.add_argument("--values", type=lambda s: [float(v) for v in s.split(",")],
                   default=[0.0, 0.1, 0.3, 0.5, 1.0])
    p.add_argument("--lambda", dest="lam", default="cvcv")
    args = p.parse_args()
    setup(args)
    lam = args.lam if args.lam == "cvcv" else float(args.lam)
    rows, by_value = [], {}
    for seed in range(args.seeds):
        out = sweep(lambda eps: boston_scale_problem(seed, eps)[0], "epsilon", args.values,
                    folds=args.folds, seed=seed, regularizer=lam, threads=args.threads)
        rows += tidy_rows(f"epsilon/seed{seed}", out)
        for r in out:
            by_value.setdefault(r.value, []).append(r.report.mean)
    write_tidy_csv(os.path.join(args.out, "epsilon_sweep.csv"), rows)
    for v, scores in by_value.items():
        print(f"epsilon {v:<5} median RMSE {np.median(scores):.3f}  mean {np.mean(scores):.3f}")


if __name__ == "__main__":
    main()
