import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballpark.classification import fit_classifier, hinge_objective, predict_class
from ballpark.core import OPTIMAL, Bag, BallparkProblem, BoundConstraint, Dataset


def two_clusters(n_per=20, seed=0, gap=6.0):
    rng = np.random.default_rng(seed)
    pos = rng.normal(size=(n_per, 2)) + [gap / 2, 0]
    neg = rng.normal(size=(n_per, 2)) - [gap / 2, 0]
    X = np.vstack([pos, neg])
    y = np.r_[np.ones(n_per), -np.ones(n_per)]
    assert np.all(np.sign(X[:, 0]) == y), "clusters must be separable by x_a = 0"
    return Dataset(X, ("a", "b"), y), y


def random_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 30))
    X = rng.normal(size=(n, 2))
    truth = np.where(X @ rng.normal(size=2) + rng.normal(size=n) * 0.5 >= 0, 1, -1)
    bags, bounds = [], []
    for k in range(int(rng.integers(1, 4))):
        members = sorted(rng.choice(n, size=int(rng.integers(2, n + 1)), replace=False).tolist())
        p = float(np.mean(truth[members] > 0))
        bags.append(Bag(f"b{k}", members))
        bounds.append(BoundConstraint(f"b{k}", max(0.0, p - 0.1), min(1.0, p + 0.1)))
    return BallparkProblem(Dataset(X, ("a", "b")), tuple(bags), tuple(bounds),
                           unlabeled_cost=float(rng.uniform(0.5, 20)))


def test_separable_clusters_reach_full_accuracy():
    ds, y = two_clusters()
    bags = (Bag("pos", range(20)), Bag("neg", range(20, 40)))
    p = BallparkProblem(ds, bags, (BoundConstraint("pos", 0.9, 1.0), BoundConstraint("neg", 0.0, 0.1)),
                        unlabeled_cost=40.0)
    fit = fit_classifier(p)
    assert fit.status == OPTIMAL
    assert np.mean(fit.predict(ds.features) == y) == 1.0


def test_equality_pinned_proportion():
    X = np.linspace(-1, 1, 10).reshape(-1, 1)
    p = BallparkProblem(Dataset(X, ("x",)), (Bag("all", range(10)),), (BoundConstraint("all", 0.5, 0.5),))
    fit = fit_classifier(p)
    assert abs(fit.p_hat["all"] - 0.5) <= 1e-6
    assert np.mean(fit.latent_labels > 0) == pytest.approx(0.5, abs=1e-6)


def test_all_positive_bag():
    X = np.random.default_rng(1).normal(size=(8, 2))
    p = BallparkProblem(Dataset(X, ("a", "b")), (Bag("all", range(8)),), (BoundConstraint("all", 1, 1),))
    fit = fit_classifier(p)
    assert np.all(fit.latent_labels == 1)


class _W:
    def __init__(self, w):
        from ballpark.core import FeatureMap
        self.weights = np.asarray(w, float)
        self.feature_map = FeatureMap()


@pytest.mark.parametrize("x, expected", [(2.0, 1), (-2.0, -1), (0.0, 1)])
def test_predict_class_sign(x, expected):
    assert predict_class(_W([1, 0]), [x]).tolist() == [expected]


def test_hinge_objective_by_hand():
    Phi = np.array([[1.0, 1.0], [-1.0, 1.0]])
    w = np.array([0.5, 0.0])
    # margins 0.5 and 0.5 -> hinge 0.5 each
    assert hinge_objective(w, np.array([1.0, -1.0]), Phi, np.array([2.0, 2.0])) == pytest.approx(0.125 + 2.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_trace_never_increases(seed):
    fit = fit_classifier(random_instance(seed))
    trace = np.asarray(fit.objective_trace)
    assert trace.size >= 1
    assert np.all(np.diff(trace) <= 1e-9 * np.maximum(1.0, np.abs(trace[:-1])))
    assert fit.iterations <= 50
    assert np.all(np.abs(fit.latent_labels) <= 1.0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 100_000))
def test_satisfied_constraints_when_optimal(seed):
    fit = fit_classifier(random_instance(seed))
    if fit.status == OPTIMAL:
        assert all(c.satisfied for c in fit.constraint_report)


def test_contradictory_proportions_use_slack():
    X = np.random.default_rng(2).normal(size=(10, 1))
    p = BallparkProblem(Dataset(X, ("x",)), (Bag("all", range(10)),),
                        (BoundConstraint("all", 0.8, 1.0), BoundConstraint("all", 0.0, 0.2)))
    fit = fit_classifier(p)
    assert fit.status == "optimal-with-slack"
    assert sum(fit.slacks.values()) > 0


def test_report_contains_trace_and_proportions():
    rep = fit_classifier(random_instance(3)).report()
    assert rep["objective_trace"] and "p_hat" in rep and rep["method"] == "classification"


def test_bad_cost_rejected():
    with pytest.raises(ValueError):
        fit_classifier(random_instance(0), unlabeled_cost=0.0)
