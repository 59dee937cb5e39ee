"""Crowd answers to constraint sets.

Three recipes: percentile bounds on point guesses, mean-of-endpoints bounds
on interval guesses, and majority-vote orderings with magnitude bounds for
pairwise questions.
"""

from __future__ import annotations

import json
import logging
import math
import statistics
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .core import INF, BallparkError, Bag, BoundConstraint, ConstraintSet, DiffConstraint, RatioConstraint

log = logging.getLogger(__name__)

POINT = "point"
INTERVAL = "interval"
PAIR = "pair"
KINDS = (POINT, INTERVAL, PAIR)
_KIND_ALIASES = {"point-estimate": POINT, "pairwise-order": PAIR, "pairwise-magnitude": PAIR}

PERCENTILE = "percentile"
INTERVAL_MEAN = "interval-mean"


class EmptyAnswersError(BallparkError, ValueError):
    pass


@dataclass(frozen=True)
class CrowdAnswer:
    worker: str
    question: str
    kind: str
    value: float | None = None
    lower: float | None = None
    upper: float | None = None
    order: str | None = None
    magnitude: float | None = None

    def __post_init__(self):
        kind = _KIND_ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise ValueError(f"unknown answer kind {self.kind!r}")
        if kind == POINT and self.value is None:
            raise ValueError(f"point answer from {self.worker!r} to {self.question!r} has no value")
        if kind == INTERVAL and (self.lower is None or self.upper is None):
            raise ValueError(f"interval answer from {self.worker!r} to {self.question!r} lacks an endpoint")
        if kind == PAIR and self.order is not None and self.order not in ("first", "second"):
            raise ValueError(f"pair order must be 'first' or 'second', got {self.order!r}")
        if kind == PAIR and self.order is None and self.magnitude is None:
            raise ValueError(f"pair answer from {self.worker!r} to {self.question!r} is empty")

    @classmethod
    def from_dict(cls, d: Mapping) -> "CrowdAnswer":
        num = lambda k: None if d.get(k) is None else float(d[k])  # noqa: E731
        return cls(str(d["worker"]), str(d["question"]), str(d["kind"]), num("value"),
                   num("lower"), num("upper"), d.get("order"), num("magnitude"))

    def to_dict(self) -> dict:
        out = {"worker": self.worker, "question": self.question, "kind": self.kind}
        for k in ("value", "lower", "upper", "order", "magnitude"):
            v = getattr(self, k)
            if v is not None:
                out[k] = v
        return out


@dataclass(frozen=True)
class CrowdAnswerSet:
    answers: tuple[CrowdAnswer, ...]

    def __post_init__(self):
        object.__setattr__(self, "answers", tuple(self.answers))

    def __len__(self):
        return len(self.answers)

    def questions(self) -> list[str]:
        """Question ids in first-appearance order."""
        return list(dict.fromkeys(a.question for a in self.answers))

    def for_question(self, question: str, kind: str | None = None) -> list[CrowdAnswer]:
        return [a for a in self.answers if a.question == question and (kind is None or a.kind == kind)]

    def without_worker(self, worker: str) -> "CrowdAnswerSet":
        return CrowdAnswerSet(tuple(a for a in self.answers if a.worker != worker))


@dataclass(frozen=True)
class AggregationPolicy:
    mode: str = PERCENTILE
    lower_quantile: float = 0.25
    diff_lower_quantile: float = 0.25
    multiplicative: bool = False

    def __post_init__(self):
        if self.mode not in (PERCENTILE, INTERVAL_MEAN):
            raise ValueError(f"unknown aggregation mode {self.mode!r}")
        for name in ("lower_quantile", "diff_lower_quantile"):
            v = getattr(self, name)
            # 0.5 is allowed: it collapses every interval onto the median
            if not 0.0 <= v <= 0.5:
                raise ValueError(f"{name} must lie in [0, 0.5], got {v}")

    @property
    def upper_quantile(self) -> float:
        return 1.0 - self.lower_quantile

    @property
    def diff_upper_quantile(self) -> float:
        return 1.0 - self.diff_lower_quantile


def quantile(values: Sequence[float], q: float) -> float:
    """Linear-interpolation quantile with ``h = q (n - 1)``.

    The interpolation starts from the nearer neighbour, so the result is exact
    at both ends of each gap.
    """
    if len(values) == 0:
        raise ValueError("quantile of an empty list")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    xs = sorted(float(v) for v in values)
    h = q * (len(xs) - 1)
    lo = math.floor(h)
    hi = min(lo + 1, len(xs) - 1)
    t = h - lo
    gap = xs[hi] - xs[lo]
    if t >= 0.5:
        return xs[hi] - gap * (1 - t)
    return xs[lo] + gap * t


def majority_order(votes: Iterable[str]) -> str:
    counts = Counter(votes)
    if not counts:
        raise ValueError("no votes")
    bad = set(counts) - {"first", "second"}
    if bad:
        raise ValueError(f"votes must be 'first' or 'second', got {sorted(bad)}")
    if counts["first"] > counts["second"]:
        return "first"
    if counts["second"] > counts["first"]:
        return "second"
    return "tie"


def _bag_ref(bag_map: Mapping, question: str):
    ref = bag_map.get(question)
    if ref is None:
        return None
    if isinstance(ref, str):
        return ref
    if "bag" in ref:
        return ref["bag"]
    return ref["first"], ref["second"]


def _pair_constraint(question, answers, first, second, policy, diagnostics):
    orders = [a.order for a in answers if a.order is not None]
    if not orders:
        diagnostics.append(f"question {question!r}: no ordering votes; skipped")
        return None
    winner = majority_order(orders)
    if winner == "tie":
        diagnostics.append(f"question {question!r}: tied ordering vote ({len(orders)} votes); skipped")
        return None
    hi, lo = (first, second) if winner == "first" else (second, first)
    # magnitudes only from workers who agree with the winning orientation
    mags = [a.magnitude for a in answers if a.magnitude is not None and a.order in (None, winner)]
    if policy.multiplicative:
        if not mags:
            return RatioConstraint(hi, lo, 1.0, INF)
        return RatioConstraint(hi, lo, quantile(mags, policy.diff_lower_quantile),
                               quantile(mags, policy.diff_upper_quantile))
    if not mags:
        return DiffConstraint(hi, lo, 0.0, INF)
    return DiffConstraint(hi, lo, quantile(mags, policy.diff_lower_quantile),
                          quantile(mags, policy.diff_upper_quantile))


def _used_bags(bags, bounds, diffs, ratios):
    names = {c.bag for c in bounds}
    names |= {n for c in diffs for n in (c.bag_hi, c.bag_lo)}
    names |= {n for c in ratios for n in (c.bag_num, c.bag_den)}
    return tuple(b for b in bags if b.name in names)


def _aggregate(answers: CrowdAnswerSet, policy: AggregationPolicy, bag_map: Mapping,
               bags: Sequence[Bag], diagnostics: list[str] | None, single_kind: str):
    if len(answers) == 0:
        raise EmptyAnswersError("no crowd answers")
    diags: list[str] = [] if diagnostics is None else diagnostics
    bounds, diffs, ratios = [], [], []
    for q in answers.questions():
        ref = _bag_ref(bag_map, q)
        if ref is None:
            diags.append(f"question {q!r} is not in the question map; skipped")
            continue
        group = answers.for_question(q)
        if isinstance(ref, tuple):
            c = _pair_constraint(q, [a for a in group if a.kind == PAIR], ref[0], ref[1], policy, diags)
            if isinstance(c, RatioConstraint):
                ratios.append(c)
            elif c is not None:
                diffs.append(c)
            continue
        if single_kind == POINT:
            vals = [a.value for a in group if a.kind == POINT]
            if not vals:
                diags.append(f"question {q!r}: no point guesses; skipped")
                continue
            bounds.append(BoundConstraint(ref, quantile(vals, policy.lower_quantile),
                                          quantile(vals, policy.upper_quantile)))
        else:
            ivs = [a for a in group if a.kind == INTERVAL]
            if not ivs:
                diags.append(f"question {q!r}: no interval answers; skipped")
                continue
            # statistics.mean rounds the exact mean once
            lo = statistics.mean(a.lower for a in ivs)
            hi = statistics.mean(a.upper for a in ivs)
            if lo > hi:
                diags.append(f"question {q!r}: mean lower {lo} exceeds mean upper {hi}; swapped")
                lo, hi = hi, lo
            bounds.append(BoundConstraint(ref, lo, hi))
    for d in diags:
        log.warning("%s", d)
    if not (bounds or diffs or ratios):
        raise EmptyAnswersError("no usable crowd answers: " + "; ".join(diags))
    return ConstraintSet(_used_bags(bags, bounds, diffs, ratios), tuple(bounds), tuple(diffs), tuple(ratios))


def aggregate_percentile(answers: CrowdAnswerSet, policy: AggregationPolicy, bag_map: Mapping,
                         bags: Sequence[Bag] = (), diagnostics: list[str] | None = None) -> ConstraintSet:
    """Bounds ``[q(b_l), q(1 - b_l)]`` of point guesses; pairwise questions by majority vote.

    ``bag_map`` maps a question id to a bag name (or ``{"bag": name}``), or for
    pairwise questions to ``{"first": name, "second": name}``. Only the bags
    that end up referenced are copied from ``bags`` into the result.
    """
    return _aggregate(answers, policy, bag_map, bags, diagnostics, POINT)


def aggregate_intervals(answers: CrowdAnswerSet, bag_map: Mapping, bags: Sequence[Bag] = (),
                        policy: AggregationPolicy | None = None,
                        diagnostics: list[str] | None = None) -> ConstraintSet:
    """Bounds from the mean lower and mean upper interval endpoints."""
    policy = policy or AggregationPolicy(mode=INTERVAL_MEAN)
    return _aggregate(answers, policy, bag_map, bags, diagnostics, INTERVAL)


def aggregate(answers: CrowdAnswerSet, policy: AggregationPolicy, bag_map: Mapping,
              bags: Sequence[Bag] = (), diagnostics: list[str] | None = None) -> ConstraintSet:
    if policy.mode == PERCENTILE:
        return aggregate_percentile(answers, policy, bag_map, bags, diagnostics)
    return aggregate_intervals(answers, bag_map, bags, policy, diagnostics)


def add_global_bound(cs: ConstraintSet, upper: float, all_bag: Bag, lower: float | None = None,
                     proportion: bool = False) -> ConstraintSet:
    """Append a bound on the bag covering every row.

    ``lower`` defaults to 0 for proportions and to -inf otherwise.
    """
    if lower is None:
        lower = 0.0 if proportion else -INF
    bags = cs.bags if any(b.name == all_bag.name for b in cs.bags) else cs.bags + (all_bag,)
    return ConstraintSet(bags, cs.bounds + (BoundConstraint(all_bag.name, lower, upper),),
                         cs.diffs, cs.ratios)


def read_answers(path) -> CrowdAnswerSet:
    """JSON-lines answers file; blank lines are ignored."""
    answers = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                answers.append(CrowdAnswer.from_dict(json.loads(line)))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad answer: {exc}") from exc
    return CrowdAnswerSet(tuple(answers))


def write_answers(path, answers: CrowdAnswerSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in answers.answers:
            fh.write(json.dumps(a.to_dict(), sort_keys=True) + "\n")


@dataclass
class QuestionMap:
    """Question id to bag reference, as stored on disk."""
    entries: dict = field(default_factory=dict)

    @classmethod
    def read(cls, path) -> "QuestionMap":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))
