import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_set
from nmerci import io as tio
from nmerci.metric import EvalSet, MetricConfig, binned_eval, n_merci


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_three_row_csv(tmp_path):
    p = write(tmp_path, "a.csv", "y_hat,sigma,y_true\n1,0.5,2\n3.25,1e-3,3\n-4,0,-4.5\n")
    data = tio.ingest(p)
    assert data.n == 3
    assert data.y_hat.tolist() == [1.0, 3.25, -4.0]
    assert data.sigma.tolist() == [0.5, 1e-3, 0.0]


def test_header_typo_names_expected(tmp_path):
    p = write(tmp_path, "a.csv", "yhat,sigma,y_true\n1,1,1\n")
    with pytest.raises(tio.IngestError, match="y_hat,sigma,y_true") as info:
        tio.ingest(p)
    assert info.value.line == 1


@pytest.mark.parametrize(
    "body, line, pattern",
    [
        ("1,1,1\n2,2\n", 3, "expected 3 fields"),
        ("1,1,1\n1,abc,2\n", 3, "not a decimal"),
        ("1,1,1\n1,1_0,2\n", 3, "not a decimal"),
        ("1,-0.5,2\n", 2, "negative sigma"),
        ("1,1,1\n1,1,nan\n", 3, "non-finite"),
        ("inf,1,1\n", 2, "non-finite"),
        ("1,1,1e999\n", 2, "non-finite"),
    ],
)
def test_csv_errors_carry_line_numbers(tmp_path, body, line, pattern):
    p = write(tmp_path, "a.csv", "y_hat,sigma,y_true\n" + body)
    with pytest.raises(tio.IngestError, match=pattern) as info:
        tio.ingest(p)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


def test_empty_and_headless_files(tmp_path):
    with pytest.raises(tio.IngestError):
        tio.ingest(write(tmp_path, "e.csv", ""))
    with pytest.raises(tio.IngestError, match="no records"):
        tio.ingest(write(tmp_path, "h.csv", "y_hat,sigma,y_true\n"))


def test_jsonl(tmp_path):
    p = write(tmp_path, "a.jsonl", '{"y_hat": 1, "sigma": 2.5, "y_true": 0}\n\n{"y_true": 1, "y_hat": 2, "sigma": 0}\n')
    data = tio.ingest(p)
    assert data.y_hat.tolist() == [1.0, 2.0] and data.y_true.tolist() == [0.0, 1.0]


@pytest.mark.parametrize(
    "body, line, pattern",
    [
        ('{"y_hat": 1, "sigma": 1}\n', 1, "missing key"),
        ('{"y_hat": 1, "sigma": 1, "y_true": 0}\n[1, 2, 3]\n', 2, "JSON object"),
        ('{"y_hat": 1, "sigma": 1, "y_true": 0}\n{"y_hat": "1", "sigma": 1, "y_true": 0}\n', 2, "not a number"),
        ('{"y_hat": true, "sigma": 1, "y_true": 0}\n', 1, "not a number"),
        ('{"y_hat": 1, "sigma": -1, "y_true": 0}\n', 1, "negative sigma"),
        ('{"y_hat": NaN, "sigma": 1, "y_true": 0}\n', 1, "non-finite"),
        ("{oops\n", 1, "malformed"),
    ],
)
def test_jsonl_errors(tmp_path, body, line, pattern):
    p = write(tmp_path, "a.jsonl", body)
    with pytest.raises(tio.IngestError, match=pattern) as info:
        tio.ingest(p)
    assert info.value.line == line


def test_format_detection(tmp_path):
    assert tio.detect_format("x.CSV") == "csv"
    assert tio.detect_format("x.ndjson") == "jsonl"
    assert tio.detect_format("x.txt", "csv") == "csv"
    with pytest.raises(ValueError):
        tio.detect_format("x.txt")
    with pytest.raises(ValueError):
        tio.detect_format("x.csv", "xml")


@settings(max_examples=20)
@given(st.integers(1, 300), st.integers(0, 2**32 - 1), st.sampled_from(["csv", "jsonl"]))
def test_round_trip_exact(tmp_path_factory, n, seed, fmt):
    data = random_set(np.random.default_rng(seed), n, positive_errors=False)
    path = tio.emit(data, tmp_path_factory.mktemp("rt") / f"s.{fmt}")
    back = tio.ingest(path)
    for name in ("y_hat", "sigma", "y_true"):
        np.testing.assert_array_equal(getattr(back, name), getattr(data, name))
    for a in (50, 85, 95, 100):
        assert n_merci(back, MetricConfig(alpha=a)) == n_merci(data, MetricConfig(alpha=a))


def test_report_csv_and_json_mirror(tmp_path):
    data = EvalSet([1.0, 2.0, 3.0, 4.0], [2.0, 1.0, 4.0, 8.0], [0.0, 0.0, 0.0, 0.0])
    rep = n_merci(data, MetricConfig(alpha=100))
    csv_path = tio.write_report([rep], tmp_path, "csv")
    json_path = tio.write_report([rep], tmp_path, "json")
    header, row = csv_path.read_text().splitlines()
    rows = json.loads(json_path.read_text())
    assert header.split(",") == list(rows[0])
    cells = dict(zip(header.split(","), row.split(",")))
    assert cells["n_merci"] == repr(10 / 3) and rows[0]["n_merci"] == 10 / 3
    assert cells["degenerate"] == "false" and rows[0]["degenerate"] is False


def test_report_json_nulls_for_missing_and_infinite(tmp_path):
    data = EvalSet([1.0, 2.0, 3.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0])
    rep = n_merci(data, MetricConfig(alpha=50))
    assert rep.degenerate
    row = json.loads(tio.write_report([rep], tmp_path, "json").read_text())[0]
    assert row["n_merci"] is None and row["lambda_alpha"] is None
    cells = tio.write_report([rep], tmp_path, "csv").read_text().splitlines()[1].split(",")
    assert "inf" in cells and "" in cells


def test_bins_csv(tmp_path):
    data = EvalSet([0.1, 0.3, 0.2, 0.6], [0.1, 0.1, 0.2, 0.3], [0.05, 0.07, 0.25, 0.5])
    path = tio.write_bins(binned_eval(data, MetricConfig(alpha=95), 0.1), tmp_path)
    lines = path.read_text().splitlines()
    assert lines[0] == "bin_low,bin_high,n,mae,n_merci,degenerate"
    assert len(lines) == 4
    first = lines[1].split(",")
    assert first[2] == "2" and first[5] in ("true", "false")
    # single-sample bins are flagged, not dropped
    assert lines[2].split(",")[3:] == ["", "", "true"]
