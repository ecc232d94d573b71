"""Triplet files and report tables.

Triplet files hold one ``(y_hat, sigma, y_true)`` record per line, either as
CSV with the header ``y_hat,sigma,y_true`` or as JSON lines with those keys.
Reals are written with ``repr`` so a write/read cycle is exact.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

import numpy as np

from .metric import REPORT_FIELDS, BinnedEval, EvalSet, EvalSetError, MetricReport

log = logging.getLogger(__name__)

__all__ = [
    "BIN_FIELDS",
    "HEADER",
    "IngestError",
    "ReportBundle",
    "SWEEP_FIELDS",
    "detect_format",
    "emit",
    "format_value",
    "ingest",
    "write_bins",
    "write_report",
    "write_sweep",
]

HEADER = ("y_hat", "sigma", "y_true")
BIN_FIELDS = ("bin_low", "bin_high", "n", "mae", "n_merci", "degenerate")
SWEEP_FIELDS = ("method", "alpha", "n_merci", "degenerate")
FORMATS = ("csv", "jsonl")

# plain decimal reals only: no underscores, hex or words like "inf"
_REAL = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_NONFINITE = re.compile(r"[+-]?(?:inf|infinity|nan)", re.IGNORECASE)

PathLike = Union[str, Path]


class IngestError(EvalSetError):
    """Malformed triplet file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def detect_format(path: PathLike, fmt: Optional[str] = None) -> str:
    if fmt is not None:
        if fmt not in FORMATS:
            raise ValueError(f"unknown triplet format {fmt!r}; expected one of {', '.join(FORMATS)}")
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    raise ValueError(f"cannot infer triplet format from {str(path)!r}; use .csv or .jsonl")


def _check_row(values: Sequence[float], line: int) -> tuple[float, float, float]:
    for name, v in zip(HEADER, values):
        if not math.isfinite(v):
            raise IngestError(f"non-finite value for {name}: {v!r}", line)
    if values[1] < 0:
        raise IngestError(f"invalid uncertainty: negative sigma {values[1]!r}", line)
    return values[0], values[1], values[2]


def _parse_real(token: str, name: str, line: int) -> float:
    token = token.strip()
    if _REAL.fullmatch(token):
        return float(token)
    if _NONFINITE.fullmatch(token):
        raise IngestError(f"non-finite value for {name}: {token!r}", line)
    raise IngestError(f"malformed row: {name}={token!r} is not a decimal number", line)


def _read_csv(path: Path) -> list[tuple[float, float, float]]:
    rows = []
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise IngestError("empty file, expected header " + ",".join(HEADER), 1)
        if tuple(h.strip() for h in header) != HEADER:
            raise IngestError(f"bad header {','.join(header)!r}, expected {','.join(HEADER)!r}", 1)
        for record in reader:
            line = reader.line_num
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            if len(record) != len(HEADER):
                raise IngestError(f"malformed row: expected {len(HEADER)} fields, got {len(record)}", line)
            values = [_parse_real(tok, name, line) for tok, name in zip(record, HEADER)]
            rows.append(_check_row(values, line))
    return rows


def _read_jsonl(path: Path) -> list[tuple[float, float, float]]:
    rows = []
    with open(path, encoding="utf-8-sig") as fh:
        for line, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise IngestError(f"malformed row: {exc.msg}", line) from None
            if not isinstance(obj, dict):
                raise IngestError("malformed row: expected a JSON object", line)
            missing = [k for k in HEADER if k not in obj]
            if missing:
                raise IngestError(f"malformed row: missing key(s) {', '.join(missing)}", line)
            values = []
            for k in HEADER:
                v = obj[k]
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise IngestError(f"malformed row: {k}={v!r} is not a number", line)
                values.append(float(v))
            rows.append(_check_row(values, line))
    return rows


def ingest(path: PathLike, fmt: Optional[str] = None) -> EvalSet:
    """Read a triplet file, preserving record order."""
    path = Path(path)
    fmt = detect_format(path, fmt)
    rows = _read_csv(path) if fmt == "csv" else _read_jsonl(path)
    if not rows:
        raise IngestError(f"{path}: no records")
    arr = np.array(rows, dtype=np.float64)
    data = EvalSet(arr[:, 0], arr[:, 1], arr[:, 2])
    log.info("read %d rows from %s", data.n, path)
    return data


def emit(data: EvalSet, path: PathLike, fmt: Optional[str] = None) -> Path:
    """Write ``data`` as a triplet file that :func:`ingest` reads back exactly."""
    path = Path(path)
    fmt = detect_format(path, fmt)
    cols = zip(data.y_hat.tolist(), data.sigma.tolist(), data.y_true.tolist())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if fmt == "csv":
            fh.write(",".join(HEADER) + "\n")
            for row in cols:
                fh.write(",".join(repr(v) for v in row) + "\n")
        else:
            for row in cols:
                fh.write(json.dumps(dict(zip(HEADER, row))) + "\n")
    return path


def format_value(v: Any) -> str:
    """CSV cell text: exact reals, ``true``/``false``, empty for missing."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_value(v: Any) -> Any:
    # JSON has no inf/nan; those become null, as do missing scores
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def _write_csv(path: Path, fields: Sequence[str], rows: Sequence[Mapping[str, Any]]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(fields) + "\n")
        for row in rows:
            fh.write(",".join(format_value(row[f]) for f in fields) + "\n")
    return path


def _write_json(path: Path, obj: Any) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False, allow_nan=False)
        fh.write("\n")
    return path


@dataclass(eq=False)
class ReportBundle:
    """Everything one command produced, plus the metadata needed to redo it."""

    reports: list[MetricReport] = field(default_factory=list)
    bins: Optional[BinnedEval] = None
    sweep: Optional[dict] = None
    meta: dict = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)


def write_report(reports: Sequence[MetricReport], out_dir: PathLike, fmt: str = "csv") -> Path:
    """``report.csv`` or ``report.json``; both carry the same fields per report."""
    out_dir = Path(out_dir)
    rows = [r.as_dict() for r in reports]
    if fmt == "csv":
        return _write_csv(out_dir / "report.csv", REPORT_FIELDS, rows)
    if fmt == "json":
        return _write_json(out_dir / "report.json", [{k: _json_value(row[k]) for k in REPORT_FIELDS} for row in rows])
    raise ValueError(f"unknown report format {fmt!r}")


def bin_rows(binned: BinnedEval) -> list[dict]:
    rows = []
    for b in binned.bins:
        r = b.report
        rows.append(
            {
                "bin_low": b.low,
                "bin_high": b.high,
                "n": b.n,
                "mae": None if r is None else r.mae,
                "n_merci": None if r is None else r.n_merci,
                # a bin too small to score is flagged like any other unusable cell
                "degenerate": True if r is None else r.degenerate,
            }
        )
    return rows


def write_bins(binned: BinnedEval, out_dir: PathLike) -> Path:
    return _write_csv(Path(out_dir) / "bins.csv", BIN_FIELDS, bin_rows(binned))


def sweep_rows(table: Mapping[str, Mapping[float, MetricReport]]) -> list[dict]:
    return [
        {"method": method, "alpha": float(a), "n_merci": rep.n_merci, "degenerate": rep.degenerate}
        for method, row in table.items()
        for a, rep in row.items()
    ]


def write_sweep(table: Mapping[str, Mapping[float, MetricReport]], out_dir: PathLike) -> Path:
    return _write_csv(Path(out_dir) / "alpha_sweep.csv", SWEEP_FIELDS, sweep_rows(table))


def write_meta(meta: Mapping[str, Any], out_dir: PathLike, name: str = "meta.json") -> Path:
    return _write_json(Path(out_dir) / name, _jsonable(meta))


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return _json_value(obj)
