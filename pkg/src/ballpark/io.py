"""Dataset CSV and bags/constraints JSON. ``null`` in JSON stands for an infinite bound."""

from __future__ import annotations

import csv
import json
import math
from typing import Mapping

import numpy as np

from .core import INF, Bag, BoundConstraint, ConstraintSet, Dataset, DiffConstraint, RatioConstraint


def read_dataset_csv(path, target: str | None = None, labeled_indices=()) -> Dataset:
    """Numeric CSV with a header row. ``target`` names the label column, if any."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array(rows, dtype=float)
    if target is not None:
        if target not in header:
            raise ValueError(f"{path}: no column named {target!r}")
        j = header.index(target)
        names = tuple(h for k, h in enumerate(header) if k != j)
        return Dataset(np.delete(data, j, axis=1), names, data[:, j], tuple(labeled_indices))
    return Dataset(data, tuple(header))


def write_dataset_csv(path, dataset: Dataset, target: str = "target") -> None:
    header = list(dataset.feature_names)
    cols = [dataset.features]
    if dataset.targets is not None:
        header.append(target)
        cols.append(dataset.targets[:, None])
    table = np.hstack(cols)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in table:
            writer.writerow([repr(float(v)) for v in row])


def _out(v: float):
    return None if not math.isfinite(v) else float(v)


def _in(v, default: float) -> float:
    return default if v is None else float(v)


def constraints_to_dict(cs: ConstraintSet) -> dict:
    return {
        "bags": [{"name": b.name, "members": list(b.members)} for b in cs.bags],
        "bounds": [{"bag": c.bag, "lower": _out(c.lower), "upper": _out(c.upper)} for c in cs.bounds],
        "diffs": [{"bag_hi": c.bag_hi, "bag_lo": c.bag_lo, "lower": _out(c.lower),
                   "upper": _out(c.upper)} for c in cs.diffs],
        "ratios": [{"bag_num": c.bag_num, "bag_den": c.bag_den, "lower": _out(c.lower),
                    "upper": _out(c.upper), "positivity_floor": c.positivity_floor}
                   for c in cs.ratios],
    }


def constraints_from_dict(d: Mapping) -> ConstraintSet:
    try:
        bags = tuple(Bag(b["name"], [int(i) for i in b["members"]]) for b in d.get("bags", ()))
        bounds = tuple(BoundConstraint(c["bag"], _in(c.get("lower"), -INF), _in(c.get("upper"), INF))
                       for c in d.get("bounds", ()))
        diffs = tuple(DiffConstraint(c["bag_hi"], c["bag_lo"], _in(c.get("lower"), -INF),
                                     _in(c.get("upper"), INF)) for c in d.get("diffs", ()))
        ratios = tuple(RatioConstraint(c["bag_num"], c["bag_den"], _in(c.get("lower"), 0.0),
                                       _in(c.get("upper"), INF), c.get("positivity_floor"))
                       for c in d.get("ratios", ()))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed constraints JSON: missing or bad field {exc}") from None
    return ConstraintSet(bags, bounds, diffs, ratios)


def dump_json(obj, path=None) -> str:
    """Deterministic JSON text (sorted keys, two-space indent, trailing newline)."""
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def read_constraints(path) -> ConstraintSet:
    return constraints_from_dict(load_json(path))


def write_constraints(path, cs: ConstraintSet, **extra) -> None:
    d = constraints_to_dict(cs)
    d.update(extra)
    dump_json(d, path)
