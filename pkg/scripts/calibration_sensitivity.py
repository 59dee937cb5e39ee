"""How the Ballpark-vs-ridge(m=10) win count depends on how much of the target
variance the bag features carry.

Bags only see three features. The remaining features are i.i.d. and
uncorrelated with the bags, so their share of the variance is out of reach
for any bag-level constraint while ten labels can still pick part of it up.

    python scripts/calibration_sensitivity.py --seeds 10
"""

import os

import numpy as np

from ballpark.core import BallparkProblem
from ballpark.evaluation import kfold_eval, ridge_baseline
from ballpark.io import dump_json
from ballpark.synthetic import BOSTON_BAG_FEATURES, BOSTON_SCALE, SyntheticSpec, gen_linear_data, synth_constraints

from _common import parser, setup

# (bag-feature weight scale, other-feature weight scale, noise sd)
SETTINGS = [(4.0, 1.26, 4.7), (4.0, 1.0, 3.0), (6.0, 1.0, 4.0), (8.0, 0.5, 3.0)]


def main():
    p = parser(__doc__.splitlines()[0])
    args = p.parse_args()
    setup(args)
    out = []
    for wb, wo, sigma in SETTINGS:
        ours, ridge = [], []
        for seed in range(args.seeds):
            data = gen_linear_data(BOSTON_SCALE["n"], BOSTON_SCALE["d"], (wb,) * 3 + (wo,) * 10, sigma,
                                   seed, BOSTON_SCALE["bias"])
            cs = synth_constraints(data.dataset, SyntheticSpec(BOSTON_BAG_FEATURES, epsilon=0.1))
            problem = BallparkProblem.from_constraints(data.dataset, cs)
            ours.append(kfold_eval(problem, folds=args.folds, seed=seed, threads=args.threads).mean)
            ridge.append(ridge_baseline(data.dataset, 10, folds=args.folds, seed=seed).mean)
        share = 3 * wb**2 / (3 * wb**2 + 10 * wo**2 + sigma**2)
        wins = int(np.sum(np.array(ours) < np.array(ridge)))
        print(f"bag weight {wb}, other {wo}, noise {sigma}: bag share {share:.2f}, "
              f"wins {wins}/{args.seeds}", flush=True)
        out.append({"bag_scale": wb, "other_scale": wo, "noise": sigma, "bag_share": share,
                    "wins": wins, "ballpark": ours, "ridge10": ridge})
    dump_json({"settings": out}, os.path.join(args.out, "calibration_sensitivity.json"))


if __name__ == "__main__":
    main()
