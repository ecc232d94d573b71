import csv
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from conftest import random_set
from nmerci import io as tio
from nmerci.cli import main
from nmerci.metric import EvalSet, MetricConfig, abs_errors, n_merci

FAST = ["--runs", "1", "--epochs", "40"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def eval_file(tmp_path, data, *flags):
    src = tio.emit(data, tmp_path / "in.csv")
    out = tmp_path / "out"
    code = main(["eval", "--input", str(src), "--out", str(out), *flags])
    return code, out


def test_eval_oracle_and_constant(tmp_path, rng):
    data = random_set(rng, 50)
    code, out = eval_file(tmp_path, data.with_sigma(abs_errors(data)))
    assert code == 0
    assert float(read_csv(out / "report.csv")[0]["n_merci"]) == 0.0
    code, out = eval_file(tmp_path, data.with_sigma(np.full(50, 2.0)))
    assert float(read_csv(out / "report.csv")[0]["n_merci"]) == pytest.approx(1.0, abs=1e-12)


def test_eval_hand_case_and_json(tmp_path):
    data = EvalSet([1.0, 2.0, 3.0, 4.0], [2.0, 1.0, 4.0, 8.0], [0.0] * 4)
    code, out = eval_file(tmp_path, data, "--alpha", "100", "--trim-mae", "false", "--format", "json")
    assert code == 0
    row = json.loads((out / "report.json").read_text())[0]
    assert row["n_merci"] == pytest.approx(10 / 3, abs=1e-12)
    assert row["trim_mae"] is False
    meta = json.loads((out / "meta.json").read_text())
    assert meta["rows"] == 4 and meta["alpha"] == 100.0


def test_eval_bins(tmp_path, rng):
    data = random_set(rng, 200)
    code, out = eval_file(tmp_path, data, "--bin-width", "2.5")
    assert code == 0
    rows = read_csv(out / "bins.csv")
    assert list(rows[0]) == ["bin_low", "bin_high", "n", "mae", "n_merci", "degenerate"]
    assert sum(int(r["n"]) for r in rows) == 200


def test_degenerate_is_success(tmp_path):
    data = EvalSet([2.0, 2.0, 2.0], [1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
    code, out = eval_file(tmp_path, data)
    assert code == 0
    row = read_csv(out / "report.csv")[0]
    assert row["degenerate"] == "true" and row["n_merci"] == ""


def test_data_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("y_hat,sigma,y_true\n1,1,1\n1,-2,1\n")
    assert main(["eval", "--input", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "line 3" in capsys.readouterr().err
    assert main(["eval", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == 1


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["eval"],
        ["eval", "--input", "x.csv", "--out", "o", "--alpha", "0"],
        ["eval", "--input", "x.csv", "--out", "o", "--trim-mae", "maybe"],
        ["eval", "--input", "x.csv", "--out", "o", "--bin-width", "-1"],
        ["eval", "--input", "x.csv", "--out", "o", "--format", "xml"],
        ["toy", "--out", "o", "--methods", "mi,nope"],
        ["toy", "--out", "o", "--alphas", "5,150"],
        ["toy", "--out", "o", "--runs", "0"],
        ["toy", "--out", "o", "--pin-outliers", "50"],
        ["frobnicate"],
    ],
)
def test_usage_errors_exit_2(argv):
    assert main(argv) == 2


def test_unknown_method_lists_valid(capsys):
    assert main(["toy", "--out", "o", "--methods", "nope"]) == 2
    err = capsys.readouterr().err
    assert "nope" in err and "bagging" in err and "mcd" in err


def test_toy_single_method_bundle(tmp_path):
    out = tmp_path / "t"
    assert main(["toy", "--methods", "mi", *FAST, "--alphas", "50,85,100", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["alpha_sweep.csv", "alpha_sweep.svg", "meta.json", "mi.csv"]
    rows = read_csv(out / "alpha_sweep.csv")
    assert [r["method"] for r in rows] == ["mi"] * 3
    assert list(rows[0]) == ["method", "alpha", "n_merci", "degenerate"]
    root = ET.fromstring((out / "alpha_sweep.svg").read_bytes())
    assert len(root.findall(".//{http://www.w3.org/2000/svg}polyline")) == 1
    meta = json.loads((out / "meta.json").read_text())
    assert meta["config"]["n_runs"] == 1 and meta["config"]["master_seed"] == 0


def test_toy_is_byte_identical_across_invocations(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert main(["toy", "--methods", "mcd,bagging", *FAST, "--seed", "7", "--out", str(o)]) == 0
    for name in ("mcd.csv", "bagging.csv", "alpha_sweep.csv", "alpha_sweep.svg", "meta.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_sweep_cells_recompute_from_triplets(tmp_path):
    out = tmp_path / "t"
    assert main(["toy", "--methods", "me,mi", *FAST, "--out", str(out)]) == 0
    for row in read_csv(out / "alpha_sweep.csv"):
        data = tio.ingest(out / f"{row['method']}.csv")
        rep = n_merci(data, MetricConfig(alpha=float(row["alpha"])))
        if row["degenerate"] == "true":
            assert rep.degenerate and row["n_merci"] == ""
        else:
            assert float(row["n_merci"]) == rep.n_merci


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "nmerci", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "nmerci" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "nmerci", "eval"], capture_output=True, text=True)
    assert proc.returncode == 2
