import json
import math

import numpy as np
import pytest

from ballpark import cli
from ballpark.core import Bag, BoundConstraint, ConstraintSet, Dataset, DiffConstraint, RatioConstraint
from ballpark.io import (
    constraints_from_dict,
    constraints_to_dict,
    dump_json,
    read_dataset_csv,
    write_dataset_csv,
)


def test_dataset_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(rng.normal(size=(7, 2)), ("a", "b"), rng.normal(size=7))
    write_dataset_csv(tmp_path / "d.csv", ds)
    back = read_dataset_csv(tmp_path / "d.csv", target="target")
    assert back.features.tobytes() == ds.features.tobytes()
    assert back.targets.tobytes() == ds.targets.tobytes()
    assert back.feature_names == ("a", "b")


def test_dataset_csv_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n3\n")
    with pytest.raises(ValueError, match=":3:"):
        read_dataset_csv(bad)
    bad.write_text("a\nfoo\n")
    with pytest.raises(ValueError):
        read_dataset_csv(bad)
    bad.write_text("a\n1\n")
    with pytest.raises(ValueError, match="no column"):
        read_dataset_csv(bad, target="y")


def test_constraints_json_round_trip():
    cs = ConstraintSet((Bag("a", [0, 1]), Bag("b", [2])),
                       (BoundConstraint("a", -math.inf, 3.0),),
                       (DiffConstraint("a", "b", 0.5, math.inf),),
                       (RatioConstraint("a", "b", 1.0, 2.0, positivity_floor=0.1),))
    d = constraints_to_dict(cs)
    assert d["bounds"][0]["lower"] is None and d["diffs"][0]["upper"] is None
    assert constraints_from_dict(json.loads(dump_json(d))) == cs


def test_malformed_constraints_json():
    with pytest.raises(ValueError):
        constraints_from_dict({"bounds": [{"lower": 1}]})


def test_dump_json_is_sorted_and_rejects_nan():
    assert dump_json({"b": 1, "a": 2}) == '{\n  "a": 2,\n  "b": 1\n}\n'
    with pytest.raises(ValueError):
        dump_json({"x": math.nan})


# ---------------------------------------------------------------- CLI


def _gen(tmp_path, *extra):
    out = tmp_path / "run"
    code = cli.run(["gen-data", "--n", "120", "--d", "4", "--seed", "7", "--weight-scale", "3",
                    "--bias", "10", "--output-dir", str(out), *extra])
    assert code == 0
    return out


def _constraints(out):
    code = cli.run(["synth-constraints", "--data", str(out / "data.csv"), "--target", "target",
                    "--features", "x0,x1", "--epsilon", "0.1", "--output-dir", str(out)])
    assert code == 0
    return out / "constraints.json"


def test_gen_data_writes_csv_and_sidecar(tmp_path):
    out = _gen(tmp_path)
    side = json.loads((out / "data.json").read_text())
    assert len(side["true_weights"]) == 4 and len(side["config_fingerprint"]) == 16
    assert read_dataset_csv(out / "data.csv", "target").features.shape == (120, 4)


def test_gen_data_boston_shape(tmp_path):
    out = tmp_path / "b"
    assert cli.run(["gen-data", "--n", "500", "--d", "13", "--seed", "7", "--output-dir", str(out)]) == 0
    assert read_dataset_csv(out / "data.csv", "target").features.shape == (500, 13)


def _pipeline(out):
    _gen(out.parent, "--output-dir", str(out))
    _constraints(out)
    assert cli.run(["fit-regression", "--data", str(out / "data.csv"), "--target", "target",
                    "--constraints", str(out / "constraints.json"), "--lambda", "cvcv",
                    "--folds", "3", "--grid", "0.01,1", "--output-dir", str(out)]) == 0
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_reruns_are_byte_identical(tmp_path):
    first = _pipeline(tmp_path / "run")
    second = _pipeline(tmp_path / "run")
    assert set(first) == {"data.csv", "data.json", "constraints.json", "cvcv.json", "fit.json"}
    assert first == second


def test_fit_regression_with_cvcv_writes_both_reports(tmp_path):
    out = _gen(tmp_path)
    _constraints(out)
    code = cli.run(["fit-regression", "--data", str(out / "data.csv"), "--target", "target",
                    "--constraints", str(out / "constraints.json"), "--lambda", "cvcv", "--folds", "3",
                    "--grid", "0.001,0.1,10", "--output-dir", str(out)])
    assert code == 0
    cv = json.loads((out / "cvcv.json").read_text())
    fit = json.loads((out / "fit.json").read_text())
    assert cv["folds"] == 3 and fit["lambda"] == cv["chosen_lambda"]
    assert fit["status"] == "optimal" and len(fit["weights"]) == 5


def test_fingerprint_ignores_output_dir(tmp_path):
    a = _gen(tmp_path / "a")
    b = _gen(tmp_path / "b")
    fa = json.loads((a / "data.json").read_text())["config_fingerprint"]
    fb = json.loads((b / "data.json").read_text())["config_fingerprint"]
    c = _gen(tmp_path / "c", "--noise", "2")
    assert fa == fb != json.loads((c / "data.json").read_text())["config_fingerprint"]


def _contradiction(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("x\n0\n1\n2\n")
    cons = tmp_path / "c.json"
    dump_json({"bags": [{"name": "all", "members": [0, 1, 2]}],
               "bounds": [{"bag": "all", "lower": 1, "upper": 1}, {"bag": "all", "lower": 2, "upper": 2}]},
              cons)
    return data, cons


def test_infeasible_exit_codes(tmp_path):
    data, cons = _contradiction(tmp_path)
    base = ["fit-regression", "--data", str(data), "--constraints", str(cons), "--lambda", "1",
            "--output-dir", str(tmp_path)]
    assert cli.run(base + ["--no-slack"]) == 3
    assert json.loads((tmp_path / "fit.json").read_text())["status"] == "infeasible"
    assert cli.run(base) == 0
    assert json.loads((tmp_path / "fit.json").read_text())["status"] == "optimal-with-slack"


def test_invalid_input_exit_codes(tmp_path, capsys):
    empty = tmp_path / "answers.jsonl"
    empty.write_text("")
    q = tmp_path / "q.json"
    q.write_text("{}")
    code = cli.run(["aggregate-crowd", "--mode", "interval", "--answers", str(empty), "--questions", str(q),
                    "--output-dir", str(tmp_path)])
    assert code == 2
    assert "no crowd answers" in capsys.readouterr().err
    assert cli.run(["fit-regression", "--data", str(tmp_path / "missing.csv"),
                    "--constraints", str(q), "--output-dir", str(tmp_path)]) == 2


def test_usage_errors(capsys):
    assert cli.run(["gen-data", "--bogus"]) == 64
    assert cli.run(["no-such-command"]) == 64
    assert cli.run(["fit-regression", "--data", "x", "--constraints", "y", "--lambda", "-1"]) == 64
    assert "usage" in capsys.readouterr().err


def test_tune_evaluate_and_sweep(tmp_path):
    out = _gen(tmp_path)
    cons = _constraints(out)
    common = ["--data", str(out / "data.csv"), "--target", "target", "--output-dir", str(out)]
    assert cli.run(["tune", *common, "--constraints", str(cons), "--grid", "0.01,1"]) == 0
    assert json.loads((out / "cvcv.json").read_text())["grid"] == [0.01, 1.0]
    assert cli.run(["evaluate", *common, "--constraints", str(cons), "--lambda", "0.1",
                    "--eval-folds", "3", "--ridge-budgets", "10,40"]) == 0
    ev = json.loads((out / "eval.json").read_text())
    assert set(ev["ridge"]) == {"10", "40"} and len(ev["ballpark"]["per_fold"]) == 3
    assert len((out / "eval.csv").read_text().splitlines()) == 1 + 3 * 3
    assert cli.run(["sweep", *common, "--parameter", "epsilon", "--features", "x0,x1",
                    "--values", "0.1,0.3,0.5,1.0", "--lambda", "0.1", "--eval-folds", "3"]) == 0
    rows = json.loads((out / "sweep.json").read_text())["rows"]
    assert [r["value"] for r in rows] == [0.1, 0.3, 0.5, 1.0]


def test_make_bags_and_classification(tmp_path):
    rng = np.random.default_rng(0)
    X = np.r_[rng.normal(size=(20, 2)) + 3, rng.normal(size=(20, 2)) - 3]
    flag = np.r_[np.ones(20), np.zeros(20)]
    data = tmp_path / "d.csv"
    write_dataset_csv(data, Dataset(np.c_[X, flag], ("a", "b", "group")))
    assert cli.run(["make-bags", "--data", str(data), "--features", "group", "--scheme", "binary",
                    "--output-dir", str(tmp_path)]) == 0
    bags = json.loads((tmp_path / "bags.json").read_text())["bags"]
    assert [b["name"] for b in bags] == ["group:yes", "group:no"]
    cons = tmp_path / "c.json"
    dump_json({"bags": bags, "bounds": [{"bag": "group:yes", "lower": 0.9, "upper": 1.0},
                                        {"bag": "group:no", "lower": 0.0, "upper": 0.1}]}, cons)
    assert cli.run(["fit-classification", "--data", str(data), "--constraints", str(cons), "--cost", "40",
                    "--output-dir", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "fit.json").read_text())
    assert rep["method"] == "classification" and rep["objective_trace"]
