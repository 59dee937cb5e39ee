import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ballpark import Bag, BallparkProblem, BoundConstraint, Dataset, DiffConstraint, RatioConstraint  # noqa: E402
from ballpark.synthetic import SyntheticSpec, gen_linear_data, synth_constraints  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


def random_problem(rng, n_max=30, d_max=3, with_diffs=True, with_ratios=False):
    """Random problem with bounds built around a hidden linear truth, so it is feasible."""
    n = int(rng.integers(6, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    X = rng.normal(size=(n, d))
    y = X @ rng.normal(size=d) * 3 + rng.normal() * 2
    if with_ratios:
        y = y - y.min() + 1.0  # positive targets keep ratios meaningful
    ds = Dataset(X, tuple(f"f{j}" for j in range(d)), y)
    bags, bounds = [], []
    for k in range(int(rng.integers(1, 4))):
        size = int(rng.integers(2, n + 1))
        members = sorted(rng.choice(n, size=size, replace=False).tolist())
        bags.append(Bag(f"b{k}", members))
        m = y[members].mean()
        width = rng.uniform(0.0, 2.0)
        bounds.append(BoundConstraint(f"b{k}", m - width, m + rng.uniform(0.0, 2.0)))
    diffs = []
    if with_diffs and len(bags) > 1:
        a, b = bags[0], bags[1]
        g = y[a.index].mean() - y[b.index].mean()
        diffs.append(DiffConstraint(a.name, b.name, g - rng.uniform(0, 1), g + rng.uniform(0, 1)))
    ratios = []
    if with_ratios and len(bags) > 1:
        num, den = bags[-1], bags[0]
        r = y[num.index].mean() / y[den.index].mean()
        ratios.append(RatioConstraint(num.name, den.name, r * rng.uniform(0.8, 1.0), r * rng.uniform(1.0, 1.2),
                                      positivity_floor=0.1))
    return BallparkProblem(ds, tuple(bags), tuple(bounds), tuple(diffs), tuple(ratios))


def overfit_scenario(seed):
    """Noise-free bag bounds plus many noisy labeled rows in 30 dimensions.

    With little ridge penalty the fit chases the label noise and the
    held-out bag parts drift outside their bounds.
    """
    n, d, m, sigma = 80, 30, 40, 8.0
    data = gen_linear_data(n, d, weight_scale=1.0, noise_sigma=0.0, seed=seed, bias=5.0)
    cs = synth_constraints(data.dataset, SyntheticSpec(("x0", "x1", "x2"), epsilon=0.1))
    rng = np.random.default_rng(seed + 1000)
    labeled = rng.choice(n, m, replace=False)
    y = data.dataset.targets.copy()
    y[labeled] += rng.normal(size=m) * sigma
    ds = Dataset(data.dataset.features, data.dataset.feature_names, y, tuple(labeled.tolist()))
    return BallparkProblem.from_constraints(ds, cs, labeled_cost=1.0)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_RESULTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[n])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
