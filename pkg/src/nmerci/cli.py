"""Command-line entry points.

``eval`` scores a triplet file; ``toy`` runs the cubic benchmark and writes
its alpha sweep. Exit codes: 0 on success (degenerate scores included), 1 on
bad data or failed training, 2 on bad usage.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from . import io as tio
from .metric import EvalSetError, MetricConfig, binned_eval, n_merci
from .nn import TrainingDiverged
from .svg import AxesMeta, emit_svg_lines
from .toy import DEFAULT_ALPHAS, DEFAULT_METHODS, METHOD_NAMES, ToyConfig, alpha_sweep, run_methods

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2

REFERENCE_ALPHA = 85.0


class UsageError(Exception):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _alpha(text: str) -> float:
    try:
        a = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"alpha must be a number, got {text!r}") from None
    if not (0 < a <= 100):
        raise argparse.ArgumentTypeError(f"alpha must be in (0, 100], got {text!r}")
    return a


def _alphas(text: str) -> tuple[float, ...]:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("empty alpha list")
    return tuple(_alpha(p) for p in parts)


def _methods(text: str) -> tuple[str, ...]:
    methods = tuple(p.strip() for p in text.split(",") if p.strip())
    if not methods:
        raise argparse.ArgumentTypeError("empty method list")
    unknown = [m for m in methods if m not in METHOD_NAMES]
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown method(s) {', '.join(unknown)}; valid: {', '.join(METHOD_NAMES)}")
    if len(set(methods)) != len(methods):
        raise argparse.ArgumentTypeError("duplicate method names")
    return methods


def _positive(kind):
    def parse(text: str):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a {kind.__name__}, got {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"expected a positive value, got {text!r}")
        return v

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nmerci", description="Score and benchmark predictive uncertainties.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("eval", help="score a triplet file")
    ev.add_argument("--input", required=True, type=Path, help="CSV (y_hat,sigma,y_true) or JSONL triplets")
    ev.add_argument("--input-format", choices=tio.FORMATS, default=None, help="override format detection")
    ev.add_argument("--alpha", type=_alpha, default=95.0)
    ev.add_argument("--trim-mae", type=_bool, default=True, metavar="BOOL")
    ev.add_argument("--bin-width", type=_positive(float), default=None)
    ev.add_argument("--format", choices=("csv", "json"), default="csv")
    ev.add_argument("--out", required=True, type=Path)

    toy = sub.add_parser("toy", help="run the cubic toy benchmark")
    toy.add_argument("--methods", type=_methods, default=DEFAULT_METHODS, help=f"comma list of {','.join(METHOD_NAMES)}")
    toy.add_argument("--runs", type=_positive(int), default=ToyConfig.n_runs)
    toy.add_argument("--seed", type=int, default=0)
    toy.add_argument("--alphas", type=_alphas, default=DEFAULT_ALPHAS)
    toy.add_argument("--epochs", type=_positive(int), default=ToyConfig.epochs)
    toy.add_argument("--pin-outliers", type=int, default=None, metavar="K", help="place exactly K points in the outlier interval")
    toy.add_argument("--out", required=True, type=Path)
    return parser


def cmd_eval(args: argparse.Namespace) -> tio.ReportBundle:
    data = tio.ingest(args.input, args.input_format)
    cfg = MetricConfig(alpha=args.alpha, trim_mae=args.trim_mae)
    report = n_merci(data, cfg)
    bundle = tio.ReportBundle(reports=[report])
    bundle.meta = {
        "tool": "nmerci",
        "version": __version__,
        "command": "eval",
        "input": str(args.input),
        "rows": data.n,
        "alpha": cfg.alpha,
        "trim_mae": cfg.trim_mae,
        "bin_width": args.bin_width,
    }
    if args.bin_width is not None:
        bundle.bins = binned_eval(data, cfg, args.bin_width)

    args.out.mkdir(parents=True, exist_ok=True)
    bundle.files.append(tio.write_report(bundle.reports, args.out, args.format))
    if bundle.bins is not None:
        bundle.files.append(tio.write_bins(bundle.bins, args.out))
    bundle.files.append(tio.write_meta(bundle.meta, args.out))
    if report.degenerate:
        log.warning("degenerate score: %s", report.reason)
    return bundle


def _sweep_svg(table: dict, labels: dict) -> Optional[str]:
    series = {}
    for method, row in table.items():
        pts = [(a, rep.n_merci) for a, rep in row.items() if rep.n_merci is not None and rep.n_merci != float("inf")]
        if len(pts) >= 2:
            series[labels[method]] = ([p[0] for p in pts], [p[1] for p in pts])
        else:
            log.warning("%s: fewer than two scorable alphas, left out of the plot", method)
    if not series:
        return None
    meta = AxesMeta(
        title="n-MeRCI vs inlier percentile",
        x_label="alpha (%)",
        y_label="n-MeRCI",
        reference_x=REFERENCE_ALPHA,
        reference_label=f"alpha = {REFERENCE_ALPHA:g}",
    )
    return emit_svg_lines(series, meta)


def cmd_toy(args: argparse.Namespace, cfg: Optional[ToyConfig] = None) -> tio.ReportBundle:
    cfg = cfg or ToyConfig()
    try:
        cfg = replace(cfg, n_runs=args.runs, master_seed=args.seed, epochs=args.epochs, pin_outliers=args.pin_outliers)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    results = run_methods(cfg, args.methods, args.alphas)
    table = alpha_sweep(results, args.alphas, cfg.trim_mae)
    bundle = tio.ReportBundle(sweep=table)
    bundle.meta = {
        "tool": "nmerci",
        "version": __version__,
        "command": "toy",
        "config": cfg.as_dict(),
        "methods": list(args.methods),
        "alphas": list(args.alphas),
        "runs": {r.method: {"seeds": r.seeds, "normalization": r.normalization} for r in results},
    }

    args.out.mkdir(parents=True, exist_ok=True)
    for r in results:
        bundle.files.append(tio.emit(r.samples, args.out / f"{r.method}.csv"))
    bundle.files.append(tio.write_sweep(table, args.out))
    svg = _sweep_svg(table, {r.method: r.label for r in results})
    if svg is not None:
        path = args.out / "alpha_sweep.svg"
        path.write_text(svg, encoding="utf-8")
        bundle.files.append(path)
    bundle.files.append(tio.write_meta(bundle.meta, args.out))
    return bundle


COMMANDS = {"eval": cmd_eval, "toy": cmd_toy}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        bundle = COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"nmerci: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EvalSetError, TrainingDiverged, OSError, ValueError) as exc:
        print(f"nmerci: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    for path in bundle.files:
        print(path)
    return EXIT_OK
