"""Sensitivity to the aggregation quantiles b_l and d_l on simulated crowd answers.

Workers guess each tercile bag's mean target with a shared optimistic bias
and individual noise, and answer pairwise questions with a noisy order and
magnitude. Narrow quantile ranges eventually contradict each other; the
sweep reports where the constraint set turns infeasible and how much slack
the soft fit then needs.

    python scripts/crowd_sweep.py --parameter b_l --values 0,0.1,0.2,0.3,0.4,0.5
"""

import itertools
import os


from ballpark import crowd
from ballpark.core import BallparkProblem
from ballpark.evaluation import sweep, tidy_rows, write_tidy_csv
from ballpark.repro import substream
from ballpark.synthetic import BOSTON_BAG_FEATURES, SyntheticSpec, bag_group, boston_scale_data, make_tercile_bags

from _common import parser, setup


def simulate(seed, workers=30, bias=1.0, noise=3.0):
    data = boston_scale_data(seed)
    ds = data.dataset
    bags = make_tercile_bags(ds, SyntheticSpec(BOSTON_BAG_FEATURES))
    means = {b.name: float(ds.targets[b.index].mean()) for b in bags}
    rng = substream(seed, "crowd")
    answers, qmap = [], {}
    for b in bags:
        q = f"mean:{b.name}"
        qmap[q] = b.name
        for w in range(workers):
            answers.append(crowd.CrowdAnswer(f"w{w}", q, "point",
                                             value=means[b.name] + bias + rng.normal() * noise))
    for a, b in itertools.combinations(bags, 2):
        if bag_group(a) != bag_group(b):
            continue
        q = f"pair:{a.name}:{b.name}"
        qmap[q] = {"first": a.name, "second": b.name}
        gap = means[a.name] - means[b.name]
        for w in range(workers):
            seen = gap + rng.normal() * noise
            answers.append(crowd.CrowdAnswer(f"w{w}", q, "pair", order="first" if seen > 0 else "second",
                                             magnitude=abs(seen)))
    return ds, bags, crowd.CrowdAnswerSet(answers), qmap


def main():
    p = parser(__doc__.splitlines()[0])
    p.add_argument("--parameter", choices=("b_l", "d_l"), default="b_l")
    p.add_argument("--values", type=lambda s: [float(v) for v in s.split(",")],
                   default=[0.0, 0.1, 0.2, 0.25, 0.3, 0.4, 0.5])
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    args = p.parse_args()
    setup(args)
    rows = []
    for seed in range(args.seeds):
        ds, bags, answers, qmap = simulate(seed)

        def template(v):
            b_l = v if args.parameter == "b_l" else 0.25
            d_l = v if args.parameter == "d_l" else 0.25
            policy = crowd.AggregationPolicy(crowd.PERCENTILE, b_l, d_l)
            return BallparkProblem.from_constraints(ds, crowd.aggregate(answers, policy, qmap, bags))

        out = sweep(template, args.parameter, args.values, folds=args.folds, seed=seed,
                    regularizer=args.lam, threads=args.threads)
        rows += tidy_rows(f"{args.parameter}/seed{seed}", out)
        print(f"seed {seed}: " + "  ".join(
            f"{r.value:g}:{r.report.mean:.2f}{'' if r.feasible else f'*({r.total_slack:.2f})'}" for r in out),
            flush=True)
    write_tidy_csv(os.path.join(args.out, f"{args.parameter}_sweep.csv"), rows)
    print("(* = infeasible, soft fit slack in parentheses)")


if __name__ == "__main__":
    main()
