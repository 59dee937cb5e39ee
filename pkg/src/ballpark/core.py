"""Domain types shared by every solver: datasets, bags, constraints, problems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

INF = math.inf

# Solution.status values
OPTIMAL = "optimal"
OPTIMAL_WITH_SLACK = "optimal-with-slack"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max-iterations"
STATUSES = (OPTIMAL, OPTIMAL_WITH_SLACK, INFEASIBLE, MAX_ITERATIONS)


class BallparkError(Exception):
    """Base class for errors raised by this package."""


class InvalidBagError(BallparkError, IndexError):
    pass


class InvalidLabelError(BallparkError, ValueError):
    pass


class DimensionError(BallparkError, ValueError):
    pass


class InvalidProblemError(BallparkError, ValueError):
    """Raised when a solver is handed a problem that fails validation."""

    def __init__(self, diagnostics: Sequence[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


def _frozen_array(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus optional ground truth.

    ``targets`` may be present for evaluation even when ``labeled_indices``
    is empty; solvers only ever read targets at labeled indices.
    """

    features: np.ndarray
    feature_names: tuple[str, ...] = ()
    targets: np.ndarray | None = None
    labeled_indices: frozenset[int] = frozenset()

    def __post_init__(self):
        X = _frozen_array(self.features)
        if X.ndim == 1:
            X = _frozen_array(X.reshape(-1, 1))
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionError(f"features must be a non-empty 2-d matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain NaN or infinite entries")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DimensionError(f"{len(names)} feature names for {X.shape[1]} columns")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "feature_names", names)

        labeled = frozenset(int(i) for i in self.labeled_indices)
        if any(i < 0 or i >= X.shape[0] for i in labeled):
            raise InvalidBagError("labeled index out of range")
        object.__setattr__(self, "labeled_indices", labeled)

        if self.targets is not None:
            y = _frozen_array(self.targets).reshape(-1)
            if y.shape[0] != X.shape[0]:
                raise DimensionError(f"{y.shape[0]} targets for {X.shape[0]} rows")
            known = np.isfinite(y)
            if labeled and not all(known[i] for i in labeled):
                raise ValueError("targets must be finite at labeled indices")
            object.__setattr__(self, "targets", y)
        elif labeled:
            raise ValueError("labeled_indices given without targets")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"unknown feature {name!r}") from None
        return self.features[:, j]

    def subset(self, rows: Sequence[int]) -> "Dataset":
        """Row subset; labeled indices are re-indexed into the subset."""
        rows = np.asarray(rows, dtype=int)
        position = {int(r): k for k, r in enumerate(rows)}
        labeled = frozenset(position[i] for i in self.labeled_indices if i in position)
        targets = None if self.targets is None else self.targets[rows]
        return Dataset(self.features[rows], self.feature_names, targets, labeled)


@dataclass(frozen=True)
class FeatureMap:
    kind: str = "identity-with-bias"

    def __post_init__(self):
        if self.kind != "identity-with-bias":
            raise ValueError(f"unsupported feature map {self.kind!r}")

    def output_dim(self, d: int) -> int:
        return d + 1

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        return np.hstack([X, np.ones((X.shape[0], 1))])


@dataclass(frozen=True)
class Bag:
    name: str
    members: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(int(i) for i in self.members))

    def __len__(self):
        return len(self.members)

    @property
    def index(self) -> np.ndarray:
        return np.fromiter(self.members, dtype=int, count=len(self.members))


@dataclass(frozen=True)
class BoundConstraint:
    """``lower <= mean(y[bag]) <= upper``. No validation here on purpose:
    inverted bounds are reported by :func:`validate_problem`."""

    bag: str
    lower: float = -INF
    upper: float = INF


@dataclass(frozen=True)
class DiffConstraint:
    """``lower <= mean(y[bag_hi]) - mean(y[bag_lo]) <= upper``."""

    bag_hi: str
    bag_lo: str
    lower: float = -INF
    upper: float = INF


@dataclass(frozen=True)
class RatioConstraint:
    """``lower <= mean(y[bag_num]) / mean(y[bag_den]) <= upper``.

    Only ever used in its linearised form, together with
    ``mean(y[bag_den]) >= positivity_floor``. A floor of ``None`` is
    resolved from the problem's label scale at solve time.
    """

    bag_num: str
    bag_den: str
    lower: float = 0.0
    upper: float = INF
    positivity_floor: float | None = None


@dataclass(frozen=True)
class ConstraintSet:
    bags: tuple[Bag, ...] = ()
    bounds: tuple[BoundConstraint, ...] = ()
    diffs: tuple[DiffConstraint, ...] = ()
    ratios: tuple[RatioConstraint, ...] = ()

    def __post_init__(self):
        for name in ("bags", "bounds", "diffs", "ratios"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def bag_by_name(self) -> dict[str, Bag]:
        return {b.name: b for b in self.bags}

    def merged(self, other: "ConstraintSet") -> "ConstraintSet":
        """Union of two sets; bags of ``other`` replace same-named bags."""
        bags = {b.name: b for b in self.bags}
        bags.update({b.name: b for b in other.bags})
        return ConstraintSet(
            tuple(bags.values()),
            self.bounds + other.bounds,
            self.diffs + other.diffs,
            self.ratios + other.ratios,
        )


@dataclass(frozen=True, eq=False)
class BallparkProblem:
    dataset: Dataset
    bags: tuple[Bag, ...] = ()
    bounds: tuple[BoundConstraint, ...] = ()
    diffs: tuple[DiffConstraint, ...] = ()
    ratios: tuple[RatioConstraint, ...] = ()
    feature_map: FeatureMap = field(default_factory=FeatureMap)
    unlabeled_cost: float = 1.0
    labeled_cost: float = 0.0

    def __post_init__(self):
        for name in ("bags", "bounds", "diffs", "ratios"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @classmethod
    def from_constraints(cls, dataset: Dataset, constraints: ConstraintSet, **kwargs) -> "BallparkProblem":
        return cls(dataset, constraints.bags, constraints.bounds, constraints.diffs,
                   constraints.ratios, **kwargs)

    @property
    def constraints(self) -> ConstraintSet:
        return ConstraintSet(self.bags, self.bounds, self.diffs, self.ratios)

    def with_constraints(self, constraints: ConstraintSet) -> "BallparkProblem":
        return replace(self, bags=constraints.bags, bounds=constraints.bounds,
                       diffs=constraints.diffs, ratios=constraints.ratios)

    def bag_by_name(self) -> dict[str, Bag]:
        return {b.name: b for b in self.bags}

    def design(self, rows=None) -> np.ndarray:
        X = self.dataset.features if rows is None else self.dataset.features[rows]
        return self.feature_map(X)

    @property
    def n_constraints(self) -> int:
        return len(self.bounds) + len(self.diffs) + len(self.ratios)


@dataclass
class Solution:
    weights: np.ndarray
    latent_labels: np.ndarray
    slacks: dict[str, float]
    objective: float
    status: str

    @property
    def total_slack(self) -> float:
        return float(sum(self.slacks.values()))


def _check_members(n: int, bag: Bag):
    if len(bag.members) == 0:
        raise InvalidBagError(f"bag {bag.name!r} is empty")
    idx = bag.index
    if idx.min() < 0 or idx.max() >= n:
        raise InvalidBagError(f"bag {bag.name!r} has an index outside [0, {n})")
    return idx


def bag_mean(values, bag: Bag) -> float:
    values = np.asarray(values, dtype=float)
    idx = _check_members(values.shape[0], bag)
    return float(values[idx].mean())


def positive_proportion(labels, bag: Bag) -> float:
    """Fraction of +1 labels among the bag's members."""
    labels = np.asarray(labels, dtype=float)
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise InvalidLabelError("labels must be -1 or +1")
    idx = _check_members(labels.shape[0], bag)
    return float(np.count_nonzero(labels[idx] == 1.0) / idx.size)


def _finite_count(lo: float, hi: float) -> int:
    return int(math.isfinite(lo)) + int(math.isfinite(hi))


def validate_problem(problem: BallparkProblem) -> list[str]:
    """Structural issues with ``problem``; an empty list means well-formed."""
    out: list[str] = []
    n = problem.dataset.n_rows
    names: dict[str, Bag] = {}
    for bag in problem.bags:
        if bag.name in names:
            out.append(f"duplicate bag name {bag.name!r}")
        names[bag.name] = bag
        if not bag.members:
            out.append(f"empty bag {bag.name!r}")
        elif min(bag.members) < 0 or max(bag.members) >= n:
            out.append(f"bag {bag.name!r} has indices outside [0, {n})")
        elif len(set(bag.members)) != len(bag.members):
            out.append(f"bag {bag.name!r} has repeated members")

    def dangling(ref: str, where: str):
        if ref not in names:
            out.append(f"dangling reference: {where} refers to unknown bag {ref!r}")

    for i, c in enumerate(problem.bounds):
        dangling(c.bag, f"bound {i}")
        if c.lower > c.upper:
            out.append(f"inverted bounds: bound {i} has lower {c.lower} > upper {c.upper}")
        if _finite_count(c.lower, c.upper) == 0:
            out.append(f"no finite bound: bound {i} on {c.bag!r}")
    for i, c in enumerate(problem.diffs):
        dangling(c.bag_hi, f"diff {i}")
        dangling(c.bag_lo, f"diff {i}")
        if c.bag_hi == c.bag_lo:
            out.append(f"self difference: diff {i} compares {c.bag_hi!r} with itself")
        if c.lower > c.upper:
            out.append(f"inverted bounds: diff {i} has lower {c.lower} > upper {c.upper}")
        if _finite_count(c.lower, c.upper) == 0:
            out.append(f"no finite bound: diff {i}")
    for i, c in enumerate(problem.ratios):
        dangling(c.bag_num, f"ratio {i}")
        dangling(c.bag_den, f"ratio {i}")
        if c.bag_num == c.bag_den:
            out.append(f"self ratio: ratio {i} compares {c.bag_num!r} with itself")
        if not (c.lower >= 0):
            out.append(f"negative ratio bound: ratio {i} has lower {c.lower} < 0")
        if c.lower > c.upper:
            out.append(f"inverted bounds: ratio {i} has lower {c.lower} > upper {c.upper}")
        if c.positivity_floor is not None and not c.positivity_floor > 0:
            out.append(f"non-positive floor: ratio {i} has positivity_floor {c.positivity_floor}")

    if not problem.unlabeled_cost > 0:
        out.append(f"unlabeled_cost must be positive, got {problem.unlabeled_cost}")
    if problem.labeled_cost < 0:
        out.append(f"labeled_cost must be non-negative, got {problem.labeled_cost}")
    if problem.labeled_cost > 0 and not problem.dataset.labeled_indices:
        out.append("labeled_cost > 0 but the dataset has no labeled instances")
    return out


def require_valid(problem: BallparkProblem) -> None:
    issues = validate_problem(problem)
    if issues:
        raise InvalidProblemError(issues)


# ---------------------------------------------------------------------------
# Linear rows: every constraint as lower <= a @ y <= upper on the label vector


@dataclass(frozen=True, eq=False)
class LinearRow:
    id: str
    coeffs: np.ndarray
    lower: float
    upper: float


def _indicator_mean(n: int, bag: Bag) -> np.ndarray:
    a = np.zeros(n)
    a[bag.index] = 1.0 / len(bag.members)
    return a


def label_scale(problem: BallparkProblem) -> float:
    """Rough magnitude of the labels, from known targets or else from bounds."""
    ds = problem.dataset
    if ds.labeled_indices:
        vals = np.abs(ds.targets[sorted(ds.labeled_indices)])
        if vals.size and vals.mean() > 0:
            return float(vals.mean())
    finite = [abs(v) for c in problem.bounds for v in (c.lower, c.upper) if math.isfinite(v)]
    finite = [v for v in finite if v > 0]
    return float(np.median(finite)) if finite else 1.0


def constraint_rows(problem: BallparkProblem, *, proportions: bool = False,
                    floor_default: float = 1e-3) -> list[LinearRow]:
    """Rewrite every constraint as a two-sided linear row over the label vector.

    With ``proportions=True`` labels live in [-1, 1] and bounds are on the
    positive proportion ``mean(y) / 2 + 1/2``; missing bounds default to the
    proportion domain [0, 1]. Ratio constraints become two linear rows plus
    a floor on the denominator mean. Rows whose bags are unknown are skipped
    (``validate_problem`` reports them).
    """
    n = problem.dataset.n_rows
    bags = problem.bag_by_name()
    rows: list[LinearRow] = []
    for i, c in enumerate(problem.bounds):
        if c.bag not in bags:
            continue
        a = _indicator_mean(n, bags[c.bag])
        lo, hi = c.lower, c.upper
        if proportions:
            lo = 0.0 if not math.isfinite(lo) else lo
            hi = 1.0 if not math.isfinite(hi) else hi
            lo, hi = 2 * lo - 1, 2 * hi - 1
        rows.append(LinearRow(f"bound:{i}", a, lo, hi))
    for i, c in enumerate(problem.diffs):
        if c.bag_hi not in bags or c.bag_lo not in bags:
            continue
        a = _indicator_mean(n, bags[c.bag_hi]) - _indicator_mean(n, bags[c.bag_lo])
        lo, hi = c.lower, c.upper
        if proportions:
            lo = -1.0 if not math.isfinite(lo) else lo
            hi = 1.0 if not math.isfinite(hi) else hi
            lo, hi = 2 * lo, 2 * hi
        rows.append(LinearRow(f"diff:{i}", a, lo, hi))
    if problem.ratios:
        if proportions:
            raise InvalidProblemError(["ratio constraints are not supported on proportions"])
        default_floor = floor_default * label_scale(problem)
    for i, c in enumerate(problem.ratios):
        if c.bag_num not in bags or c.bag_den not in bags:
            continue
        num = _indicator_mean(n, bags[c.bag_num])
        den = _indicator_mean(n, bags[c.bag_den])
        rows.append(LinearRow(f"ratio:{i}:lower", num - c.lower * den, 0.0, INF))
        if math.isfinite(c.upper):
            rows.append(LinearRow(f"ratio:{i}:upper", num - c.upper * den, -INF, 0.0))
        floor = c.positivity_floor if c.positivity_floor is not None else default_floor
        rows.append(LinearRow(f"ratio:{i}:floor", den, floor, INF))
    return rows


def stack_rows(rows: Iterable[LinearRow], n: int):
    """Rows as ``(A, lower, upper, ids)`` arrays."""
    rows = list(rows)
    if not rows:
        return np.zeros((0, n)), np.zeros(0), np.zeros(0), []
    A = np.vstack([r.coeffs for r in rows])
    lo = np.array([r.lower for r in rows], dtype=float)
    hi = np.array([r.upper for r in rows], dtype=float)
    return A, lo, hi, [r.id for r in rows]


def restrict_to_rows(problem: BallparkProblem, rows: Sequence[int]):
    """Problem over a row subset with bags intersected and re-indexed.

    Bags left empty are dropped together with any constraint that mentions
    them. Returns ``(problem, diagnostics)``.
    """
    rows = np.asarray(rows, dtype=int)
    position = {int(r): k for k, r in enumerate(rows)}
    dataset = problem.dataset.subset(rows)
    bags, dropped = [], set()
    for bag in problem.bags:
        members = [position[i] for i in bag.members if i in position]
        if members:
            bags.append(Bag(bag.name, members))
        else:
            dropped.add(bag.name)
    diags = [f"bag {name!r} has no rows in the subset and was dropped" for name in sorted(dropped)]
    keep = lambda *refs: not any(r in dropped for r in refs)  # noqa: E731
    labeled_cost = problem.labeled_cost if dataset.labeled_indices else 0.0
    sub = replace(
        problem,
        dataset=dataset,
        bags=tuple(bags),
        bounds=tuple(c for c in problem.bounds if keep(c.bag)),
        diffs=tuple(c for c in problem.diffs if keep(c.bag_hi, c.bag_lo)),
        ratios=tuple(c for c in problem.ratios if keep(c.bag_num, c.bag_den)),
        labeled_cost=labeled_cost,
    )
    return sub, diags
