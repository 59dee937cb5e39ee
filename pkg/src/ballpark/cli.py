"""``ballpark`` command line.

Subcommands read and write files in ``--output-dir``; every JSON output
carries the run's config fingerprint. Exit codes: 0 success, 2 invalid
input, 3 infeasible constraints with ``--no-slack``, 64 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import crowd, io
from .classification import fit_classifier
from .core import INFEASIBLE, Bag, BallparkError, BallparkProblem, ConstraintSet, require_valid
from .cvcv import DEFAULT_GRID, tune_lambda
from .evaluation import (
    kfold_eval,
    report_rows,
    ridge_baseline,
    sweep,
    tidy_rows,
    write_tidy_csv,
)
from .qp import SolverConfig
from .regression import FEASIBILITY, JOINT, OBJECTIVES, TWO_STEP, fit_regression
from .repro import fingerprint, subseed
from .synthetic import SyntheticSpec, gen_linear_data, synth_constraints, tercile_bags

log = logging.getLogger("ballpark")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3
EXIT_USAGE = 64
DEFAULT_SEED = 42


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


@dataclass
class RunConfig:
    subcommand: str
    dataset_path: str | None = None
    target_column: str | None = None
    bags_path: str | None = None
    constraints_path: str | None = None
    answers_path: str | None = None
    method: str | None = None
    lam: str | None = None
    folds: int | None = None
    seed: int = DEFAULT_SEED
    output_dir: str = "."
    options: dict = field(default_factory=dict)

    def fingerprint(self) -> str:
        d = asdict(self)
        d.pop("output_dir")
        return fingerprint(d)


_CORE_KEYS = {"data": "dataset_path", "target": "target_column", "bags": "bags_path",
              "constraints": "constraints_path", "answers": "answers_path", "method": "method",
              "lam": "lam", "folds": "folds", "seed": "seed", "output_dir": "output_dir"}
_IGNORED = {"command", "func", "threads", "log_level"}


def _run_config(args) -> RunConfig:
    kw = {"subcommand": args.command, "options": {}}
    for k, v in sorted(vars(args).items()):
        if k in _IGNORED:
            continue
        if k in _CORE_KEYS:
            kw[_CORE_KEYS[k]] = v
        else:
            kw["options"][k] = v
    return RunConfig(**kw)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _lambda(text: str):
    if text == "cvcv":
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--lambda takes a number or 'cvcv', got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("--lambda must be positive")
    return text


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ballpark", description="Learning from bag-level constraints.")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True, target=False):
        sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
        sp.add_argument("--output-dir", default=".")
        if data:
            sp.add_argument("--data", required=True, help="dataset CSV")
            sp.add_argument("--target", required=target, default=None, help="label column")

    sp = sub.add_parser("gen-data", help="synthetic linear dataset")
    common(sp, data=False)
    sp.add_argument("--n", type=int, default=500)
    sp.add_argument("--d", type=int, default=13)
    sp.add_argument("--weight-scale", type=_floats, default=[1.0])
    sp.add_argument("--noise", type=float, default=1.0)
    sp.add_argument("--bias", type=float, default=0.0)
    sp.add_argument("--name", default="data")
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("make-bags", help="bags from feature values")
    common(sp)
    sp.add_argument("--features", type=_names, default=[])
    sp.add_argument("--scheme", choices=("terciles", "binary", "all"), default="terciles")
    sp.add_argument("--cut-quantiles", type=_floats, default=[0.33, 0.66])
    sp.add_argument("--out", default="bags.json")
    sp.set_defaults(func=cmd_make_bags)

    sp = sub.add_parser("synth-constraints", help="epsilon constraints from true bag means")
    common(sp, target=True)
    sp.add_argument("--features", type=_names, required=True)
    sp.add_argument("--epsilon", type=float, default=0.1)
    sp.add_argument("--cut-quantiles", type=_floats, default=[0.33, 0.66])
    sp.add_argument("--no-diffs", action="store_true")
    sp.add_argument("--adjacent-only", action="store_true")
    sp.add_argument("--cross-feature", action="store_true")
    sp.add_argument("--out", default="constraints.json")
    sp.set_defaults(func=cmd_synth_constraints)

    sp = sub.add_parser("aggregate-crowd", help="constraints from crowd answers")
    common(sp, data=False)
    sp.add_argument("--answers", required=True, help="answers JSON-lines file")
    sp.add_argument("--questions", required=True, help="question-to-bag map JSON")
    sp.add_argument("--bags", default=None, help="bags JSON to copy referenced bags from")
    sp.add_argument("--mode", choices=("percentile", "interval"), default="percentile")
    sp.add_argument("--b-l", type=float, default=0.25)
    sp.add_argument("--d-l", type=float, default=0.25)
    sp.add_argument("--multiplicative", action="store_true")
    sp.add_argument("--global-upper", type=float, default=None)
    sp.add_argument("--global-lower", type=float, default=None)
    sp.add_argument("--proportion", action="store_true")
    sp.add_argument("--out", default="constraints.json")
    sp.set_defaults(func=cmd_aggregate_crowd)

    def fit_opts(sp, with_lambda=True):
        sp.add_argument("--constraints", required=True)
        sp.add_argument("--method", choices=(TWO_STEP, FEASIBILITY), default=TWO_STEP)
        if with_lambda:
            sp.add_argument("--lambda", dest="lam", type=_lambda, default="cvcv")
        sp.add_argument("--folds", type=int, default=3)
        sp.add_argument("--grid", type=_floats, default=list(DEFAULT_GRID))
        sp.add_argument("--slack-penalty", type=float, default=1e3)
        sp.add_argument("--no-slack", action="store_true")
        sp.add_argument("--threads", type=int, default=None)

    sp = sub.add_parser("fit-regression", help="fit a Ballpark regression model")
    common(sp)
    fit_opts(sp)
    sp.add_argument("--objective", choices=OBJECTIVES, default=JOINT)
    sp.set_defaults(func=cmd_fit_regression)

    sp = sub.add_parser("fit-classification", help="fit a Ballpark classifier")
    common(sp)
    sp.add_argument("--constraints", required=True)
    sp.add_argument("--cost", type=float, default=1.0)
    sp.add_argument("--slack-penalty", type=float, default=1e3)
    sp.add_argument("--no-slack", action="store_true")
    sp.set_defaults(func=cmd_fit_classification)

    sp = sub.add_parser("tune", help="choose lambda by constraint violation CV")
    common(sp)
    fit_opts(sp, with_lambda=False)
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("evaluate", help="k-fold test error plus ridge baselines")
    common(sp, target=True)
    fit_opts(sp)
    sp.add_argument("--eval-folds", type=int, default=5)
    sp.add_argument("--metric", choices=("rmse", "mae"), default="rmse")
    sp.add_argument("--ridge-budgets", type=lambda s: [int(v) for v in _floats(s)], default=[10])
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("sweep", help="sensitivity sweep over one parameter")
    common(sp, target=True)
    sp.add_argument("--parameter", choices=("epsilon", "lambda", "b_l", "d_l"), required=True)
    sp.add_argument("--values", type=_floats, required=True)
    sp.add_argument("--constraints", default=None, help="fixed constraints (lambda sweep)")
    sp.add_argument("--features", type=_names, default=[], help="bag features (epsilon sweep)")
    sp.add_argument("--answers", default=None)
    sp.add_argument("--questions", default=None)
    sp.add_argument("--bags", default=None)
    sp.add_argument("--mode", choices=("percentile", "interval"), default="percentile")
    sp.add_argument("--b-l", type=float, default=0.25)
    sp.add_argument("--d-l", type=float, default=0.25)
    sp.add_argument("--multiplicative", action="store_true")
    sp.add_argument("--method", choices=(TWO_STEP, FEASIBILITY), default=TWO_STEP)
    sp.add_argument("--lambda", dest="lam", type=_lambda, default="cvcv")
    sp.add_argument("--eval-folds", type=int, default=5)
    sp.add_argument("--metric", choices=("rmse", "mae"), default="rmse")
    sp.add_argument("--threads", type=int, default=None)
    sp.set_defaults(func=cmd_sweep)
    return p


# ---------------------------------------------------------------------------
# helpers


def _path(args, name):
    os.makedirs(args.output_dir, exist_ok=True)
    return os.path.join(args.output_dir, name)


def _write(args, name, payload, fp):
    payload = dict(payload)
    payload["config_fingerprint"] = fp
    path = _path(args, name)
    io.dump_json(payload, path)
    log.info("wrote %s", path)
    return path


def _problem(args) -> BallparkProblem:
    ds = io.read_dataset_csv(args.data, args.target)
    cs = io.read_constraints(args.constraints)
    problem = BallparkProblem.from_constraints(ds, cs)
    require_valid(problem)
    return problem


def _solver(args) -> SolverConfig:
    return SolverConfig(escalate_to_slack=not getattr(args, "no_slack", False))


def _lam_value(args):
    return args.lam if args.lam == "cvcv" else float(args.lam)


class Infeasible(Exception):
    pass


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args, fp):
    scale = args.weight_scale[0] if len(args.weight_scale) == 1 else args.weight_scale
    data = gen_linear_data(args.n, args.d, scale, args.noise, subseed(args.seed, "gen-data"), args.bias)
    io.write_dataset_csv(_path(args, f"{args.name}.csv"), data.dataset)
    _write(args, f"{args.name}.json", {
        "true_weights": data.true_weights.tolist(), "true_bias": data.true_bias,
        "meta": data.meta, "target_column": "target", "csv": f"{args.name}.csv"}, fp)


def _bags_for(ds, features, scheme, cuts) -> list[Bag]:
    if scheme == "all":
        return [Bag("all", list(range(ds.n_rows)))]
    if not features:
        raise ValueError(f"--features is required for the {scheme} scheme")
    bags = []
    for f in features:
        v = ds.column(f)
        if scheme == "terciles":
            bags.extend(tercile_bags(v, f, tuple(cuts)))
        else:
            yes = np.flatnonzero(v != 0)
            no = np.flatnonzero(v == 0)
            for name, idx in ((f"{f}:yes", yes), (f"{f}:no", no)):
                if idx.size:
                    bags.append(Bag(name, idx.tolist()))
    return bags


def cmd_make_bags(args, fp):
    if len(args.cut_quantiles) != 2:
        raise ValueError("--cut-quantiles takes two values")
    ds = io.read_dataset_csv(args.data, args.target)
    bags = _bags_for(ds, args.features, args.scheme, args.cut_quantiles)
    _write(args, args.out, io.constraints_to_dict(ConstraintSet(tuple(bags))), fp)


def cmd_synth_constraints(args, fp):
    ds = io.read_dataset_csv(args.data, args.target)
    spec = SyntheticSpec(tuple(args.features), tuple(args.cut_quantiles), args.epsilon,
                         not args.no_diffs, args.seed, args.adjacent_only, args.cross_feature)
    cs = synth_constraints(ds, spec)
    _write(args, args.out, io.constraints_to_dict(cs), fp)


def _aggregate(answers, questions, bags, mode, b_l, d_l, multiplicative):
    policy = crowd.AggregationPolicy(
        crowd.PERCENTILE if mode == "percentile" else crowd.INTERVAL_MEAN, b_l, d_l, multiplicative)
    diags: list[str] = []
    cs = crowd.aggregate(answers, policy, questions, bags, diags)
    for d in diags:
        print(f"ballpark: {d}", file=sys.stderr)
    return cs


def cmd_aggregate_crowd(args, fp):
    answers = crowd.read_answers(args.answers)
    questions = io.load_json(args.questions)
    bags = io.read_constraints(args.bags).bags if args.bags else ()
    cs = _aggregate(answers, questions, bags, args.mode, args.b_l, args.d_l, args.multiplicative)
    if args.global_upper is not None or args.global_lower is not None:
        all_bag = next((b for b in bags if b.name == "all"), None)
        if all_bag is None:
            raise ValueError("a global bound needs a bag named 'all' in --bags")
        upper = args.global_upper if args.global_upper is not None else float("inf")
        cs = crowd.add_global_bound(cs, upper, all_bag, args.global_lower, args.proportion)
    _write(args, args.out, io.constraints_to_dict(cs), fp)


def cmd_tune(args, fp):
    problem = _problem(args)
    rep = tune_lambda(problem, args.grid, args.folds, subseed(args.seed, "cvcv"), args.method,
                      _solver(args), args.threads)
    _write(args, "cvcv.json", rep.to_dict(), fp)
    return rep


def cmd_fit_regression(args, fp):
    problem = _problem(args)
    cfg = _solver(args)
    lam = _lam_value(args)
    if args.method == FEASIBILITY:
        lam = None
    elif lam == "cvcv":
        rep = tune_lambda(problem, args.grid, args.folds, subseed(args.seed, "cvcv"), args.method,
                          cfg, args.threads)
        _write(args, "cvcv.json", rep.to_dict(), fp)
        lam = rep.chosen_lambda
    fit = fit_regression(problem, args.method, regularizer=lam, config=cfg,
                         slack_penalty=args.slack_penalty, objective=args.objective)
    _write(args, "fit.json", fit.report(), fp)
    if fit.status == INFEASIBLE:
        raise Infeasible("constraints are infeasible and slack escalation is disabled")


def cmd_fit_classification(args, fp):
    problem = _problem(args)
    fit = fit_classifier(problem, args.cost, _solver(args), args.slack_penalty)
    _write(args, "fit.json", fit.report(), fp)
    if fit.status == INFEASIBLE:
        raise Infeasible("proportion constraints are infeasible and slack escalation is disabled")


def cmd_evaluate(args, fp):
    problem = _problem(args)
    lam = _lam_value(args)
    if args.method == FEASIBILITY:
        lam = None
    seed = subseed(args.seed, "evaluate")
    rep = kfold_eval(problem, args.method, args.metric, args.eval_folds, seed, lam, args.folds,
                     args.grid, _solver(args), args.threads)
    baselines = {str(m): ridge_baseline(problem.dataset, m, folds=args.eval_folds, seed=seed,
                                        metric=args.metric) for m in args.ridge_budgets}
    _write(args, "eval.json", {"ballpark": rep.to_dict(),
                               "ridge": {k: v.to_dict() for k, v in baselines.items()}}, fp)
    rows = report_rows("ballpark", rep)
    for m, r in baselines.items():
        rows += report_rows("ridge", r, "label_budget", int(m))
    write_tidy_csv(_path(args, "eval.csv"), [dict(r, config_fingerprint=fp) for r in rows])


def _sweep_template(args):
    ds = io.read_dataset_csv(args.data, args.target)
    if args.parameter == "epsilon":
        if not args.features:
            raise ValueError("an epsilon sweep needs --features")

        def template(eps):
            spec = SyntheticSpec(tuple(args.features), epsilon=eps, seed=args.seed)
            return BallparkProblem.from_constraints(ds, synth_constraints(ds, spec))
        return template
    if args.parameter == "lambda":
        if not args.constraints:
            raise ValueError("a lambda sweep needs --constraints")
        problem = BallparkProblem.from_constraints(ds, io.read_constraints(args.constraints))
        require_valid(problem)
        return lambda _: problem
    if not (args.answers and args.questions and args.bags):
        raise ValueError(f"a {args.parameter} sweep needs --answers, --questions and --bags")
    answers = crowd.read_answers(args.answers)
    questions = io.load_json(args.questions)
    bags = io.read_constraints(args.bags).bags

    def template(v):
        b_l = v if args.parameter == "b_l" else args.b_l
        d_l = v if args.parameter == "d_l" else args.d_l
        cs = _aggregate(answers, questions, bags, args.mode, b_l, d_l, args.multiplicative)
        return BallparkProblem.from_constraints(ds, cs)
    return template


def cmd_sweep(args, fp):
    template = _sweep_template(args)
    lam = _lam_value(args)
    if args.method == FEASIBILITY:
        lam = None
    rows = sweep(template, args.parameter, args.values, args.eval_folds,
                 subseed(args.seed, "sweep"), args.method, args.metric, lam, SolverConfig(),
                 args.threads)
    _write(args, "sweep.json", {"rows": [
        {"parameter": r.parameter, "value": r.value, "feasible": r.feasible,
         "total_slack": r.total_slack, "report": r.report.to_dict()} for r in rows]}, fp)
    write_tidy_csv(_path(args, "sweep.csv"),
                   [dict(r, config_fingerprint=fp) for r in tidy_rows("sweep", rows)])


# ---------------------------------------------------------------------------


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                         format="%(levelname)s %(name)s: %(message)s")
    config = _run_config(args)
    try:
        args.func(args, config.fingerprint())
    except Infeasible as exc:
        print(f"ballpark: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (BallparkError, ValueError, KeyError, OSError) as exc:
        print(f"ballpark: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
