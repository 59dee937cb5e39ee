"""Synthetic ground truth: tercile bags, epsilon-perturbed constraints, linear data."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Bag, BoundConstraint, ConstraintSet, Dataset, DiffConstraint

log = logging.getLogger(__name__)

TERCILE_LEVELS = ("low", "medium", "high")


@dataclass(frozen=True)
class SyntheticSpec:
    bag_features: tuple[str, ...]
    cut_quantiles: tuple[float, float] = (0.33, 0.66)
    epsilon: float = 0.1
    include_diffs: bool = True
    seed: int = 0
    adjacent_only: bool = False
    cross_feature: bool = False

    def __post_init__(self):
        object.__setattr__(self, "bag_features", tuple(self.bag_features))
        lo, hi = self.cut_quantiles
        if not 0 < lo < hi < 1:
            raise ValueError(f"cut quantiles must satisfy 0 < lo < hi < 1, got {self.cut_quantiles}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")


def bag_group(bag: Bag) -> str:
    """Source feature of a bag named ``feature:level``."""
    return bag.name.rsplit(":", 1)[0]


def tercile_bags(values, name: str, cut_quantiles=(0.33, 0.66)) -> list[Bag]:
    v = np.asarray(values, dtype=float)
    if np.ptp(v) == 0:
        raise ValueError(f"feature {name!r} is constant; cannot form terciles")
    c1, c2 = np.quantile(v, cut_quantiles)
    masks = (v <= c1, (v > c1) & (v <= c2), v > c2)
    bags = []
    for level, mask in zip(TERCILE_LEVELS, masks):
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            log.warning("tercile %s:%s is empty (ties at the cutoff); skipped", name, level)
            continue
        bags.append(Bag(f"{name}:{level}", idx.tolist()))
    return bags


def make_tercile_bags(dataset: Dataset, spec: SyntheticSpec) -> list[Bag]:
    """Three bags (low/medium/high) per named feature. Ties go to the lower bag."""
    bags: list[Bag] = []
    for name in spec.bag_features:
        bags.extend(tercile_bags(dataset.column(name), name, spec.cut_quantiles))
    return bags


def _true_means(dataset: Dataset, bags: Sequence[Bag]) -> dict[str, float]:
    if dataset.targets is None:
        raise ValueError("synthetic constraints need ground-truth targets")
    return {b.name: float(dataset.targets[b.index].mean()) for b in bags}


def _scaled_interval(value: float, epsilon: float) -> tuple[float, float]:
    lo, hi = (1 - epsilon) * value, (1 + epsilon) * value
    return (lo, hi) if lo <= hi else (hi, lo)


def synth_bounds(dataset: Dataset, bags: Sequence[Bag], epsilon: float) -> list[BoundConstraint]:
    """``[(1-eps) * mean, (1+eps) * mean]`` around each bag's true mean."""
    means = _true_means(dataset, bags)
    return [BoundConstraint(b.name, *_scaled_interval(means[b.name], epsilon)) for b in bags]


def synth_diffs(dataset: Dataset, bags: Sequence[Bag], epsilon: float, *,
                adjacent_only: bool = False, cross_feature: bool = False) -> list[DiffConstraint]:
    """Ordered-pair difference constraints from the true partial order of bag means.

    Pairs are drawn within the same source feature unless ``cross_feature``.
    With ``adjacent_only`` only neighbouring bags (in list order) of the same
    feature are paired. Pairs with equal means carry no ordering and are
    skipped.
    """
    means = _true_means(dataset, bags)
    if cross_feature:
        pairs = list(itertools.combinations(bags, 2))
    else:
        groups: dict[str, list[Bag]] = {}
        for b in bags:
            groups.setdefault(bag_group(b), []).append(b)
        pairs = []
        for members in groups.values():
            if adjacent_only:
                pairs.extend(zip(members, members[1:]))
            else:
                pairs.extend(itertools.combinations(members, 2))
    out = []
    for a, b in pairs:
        gap = means[a.name] - means[b.name]
        if gap == 0:
            continue
        hi, lo = (a, b) if gap > 0 else (b, a)
        out.append(DiffConstraint(hi.name, lo.name, *_scaled_interval(abs(gap), epsilon)))
    return out


def synth_constraints(dataset: Dataset, spec: SyntheticSpec) -> ConstraintSet:
    bags = make_tercile_bags(dataset, spec)
    bounds = synth_bounds(dataset, bags, spec.epsilon)
    diffs = synth_diffs(dataset, bags, spec.epsilon, adjacent_only=spec.adjacent_only,
                        cross_feature=spec.cross_feature) if spec.include_diffs else []
    return ConstraintSet(tuple(bags), tuple(bounds), tuple(diffs))


@dataclass(frozen=True, eq=False)
class SyntheticData:
    dataset: Dataset
    true_weights: np.ndarray
    true_bias: float
    meta: dict = field(default_factory=dict)


def gen_linear_data(n: int, d: int, weight_scale=1.0, noise_sigma: float = 1.0,
                    seed: int = 0, bias: float = 0.0) -> SyntheticData:
    """Standard-normal features, ``y = X w* + bias + noise``.

    ``weight_scale`` may be a scalar or one scale per feature; ``w*`` is drawn
    as ``N(0, scale^2)`` per coordinate.
    """
    if n < d + 1:
        raise ValueError(f"need n >= d + 1, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    scale = np.broadcast_to(np.asarray(weight_scale, dtype=float), (d,))
    w = rng.standard_normal(d) * scale
    noise = rng.standard_normal(n) * noise_sigma
    y = X @ w + bias + noise
    ds = Dataset(X, tuple(f"x{j}" for j in range(d)), y)
    return SyntheticData(ds, w, float(bias),
                         {"n": n, "d": d, "noise_sigma": noise_sigma, "seed": seed})


# Boston-scale benchmark. Calibrated to the public housing data: target mean
# 22.5 and variance about 85, of which the three bag features (CRIM, NOX, RM
# there) explain roughly 0.55, the other ten about 0.19, and noise the rest
# (OLS residual sd about 4.7). Weights are N(0, scale^2) per feature.
BOSTON_SCALE = {
    "n": 500,
    "d": 13,
    "weight_scale": (4.0,) * 3 + (1.26,) * 10,
    "noise_sigma": 4.7,
    "bias": 22.5,
}
BOSTON_BAG_FEATURES = ("x0", "x1", "x2")


def boston_scale_data(seed: int) -> SyntheticData:
    return gen_linear_data(seed=seed, **BOSTON_SCALE)


def boston_scale_problem(seed: int, epsilon: float = 0.1, **spec_kwargs):
    """Tercile bags on three features with epsilon constraints; returns ``(problem, data)``."""
    from .core import BallparkProblem

    data = boston_scale_data(seed)
    spec = SyntheticSpec(BOSTON_BAG_FEATURES, epsilon=epsilon, seed=seed, **spec_kwargs)
    cs = synth_constraints(data.dataset, spec)
    return BallparkProblem.from_constraints(data.dataset, cs), data
