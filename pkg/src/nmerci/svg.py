"""Standalone SVG line charts with linear axes.

Output bytes depend only on the input: coordinates are printed with a fixed
number of decimals and series keep their given order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["AxesMeta", "PlotArea", "emit_svg_lines", "nice_ticks"]

COLORS = ("#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#e377c2", "#7f7f7f")
REFERENCE_COLOR = "#d62728"


@dataclass(frozen=True)
class AxesMeta:
    title: str = ""
    x_label: str = "x"
    y_label: str = "y"
    # None: use the data range
    x_range: Optional[tuple[float, float]] = None
    y_range: Optional[tuple[float, float]] = None
    reference_x: Optional[float] = None
    reference_label: str = ""
    width: int = 720
    height: int = 450
    margin_left: int = 70
    margin_right: int = 170
    margin_top: int = 40
    margin_bottom: int = 60


@dataclass(frozen=True)
class PlotArea:
    """Affine map from data coordinates to the pixel rectangle of the plot."""

    left: float
    top: float
    width: float
    height: float
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    @property
    def bottom(self) -> float:
        return self.top + self.height

    def px(self, x: float, y: float) -> tuple[float, float]:
        u = (x - self.x_min) / (self.x_max - self.x_min)
        v = (y - self.y_min) / (self.y_max - self.y_min)
        return self.left + u * self.width, self.bottom - v * self.height


def _span(lo: float, hi: float) -> tuple[float, float]:
    if hi > lo:
        return lo, hi
    # a flat range still needs a nonzero extent
    pad = 0.5 if lo == 0 else abs(lo) * 0.05
    return lo - pad, hi + pad


def nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    """Round-valued ticks inside ``[lo, hi]``, roughly ``target`` of them."""
    raw = (hi - lo) / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step - 1e-9)
    ticks = []
    k = first
    while k * step <= hi + step * 1e-9:
        ticks.append(k * step)
        k += 1
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    text = f"{v:.6g}"
    return "0" if text == "-0" else text


def plot_area(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], meta: AxesMeta) -> PlotArea:
    xs = np.concatenate([np.asarray(s[0], dtype=np.float64) for s in series.values()])
    ys = np.concatenate([np.asarray(s[1], dtype=np.float64) for s in series.values()])
    x_min, x_max = meta.x_range if meta.x_range is not None else _span(float(xs.min()), float(xs.max()))
    y_min, y_max = meta.y_range if meta.y_range is not None else _span(float(ys.min()), float(ys.max()))
    if not (x_max > x_min and y_max > y_min):
        raise ValueError("axis ranges must have positive extent")
    return PlotArea(
        left=meta.margin_left,
        top=meta.margin_top,
        width=meta.width - meta.margin_left - meta.margin_right,
        height=meta.height - meta.margin_top - meta.margin_bottom,
        x_min=x_min,
        x_max=x_max,
        y_min=y_min,
        y_max=y_max,
    )


def _check_series(series: Mapping[str, tuple[Sequence[float], Sequence[float]]]) -> None:
    if not series:
        raise ValueError("no series to plot")
    for name, (xs, ys) in series.items():
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        if xs.shape != ys.shape or xs.ndim != 1:
            raise ValueError(f"series {name!r}: x and y must be 1-D and of equal length")
        if xs.size < 2:
            raise ValueError(f"series {name!r}: need at least 2 points, got {xs.size}")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError(f"series {name!r}: non-finite coordinates")


def emit_svg_lines(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], meta: AxesMeta = AxesMeta()) -> str:
    """Render ``{name: (xs, ys)}`` as one polyline per series."""
    _check_series(series)
    area = plot_area(series, meta)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{meta.width}" height="{meta.height}" '
        f'viewBox="0 0 {meta.width} {meta.height}" font-family="sans-serif">',
        f'<rect x="0" y="0" width="{meta.width}" height="{meta.height}" fill="#ffffff"/>',
    ]
    if meta.title:
        out.append(
            f'<text x="{_fmt(area.left + area.width / 2)}" y="{_fmt(meta.margin_top / 2 + 5)}" '
            f'text-anchor="middle" font-size="15">{escape(meta.title)}</text>'
        )

    # ticks and grid
    out.append('<g class="x-ticks" font-size="11" text-anchor="middle">')
    for t in nice_ticks(area.x_min, area.x_max):
        px, _ = area.px(t, area.y_min)
        out.append(f'<line x1="{_fmt(px)}" y1="{_fmt(area.top)}" x2="{_fmt(px)}" y2="{_fmt(area.bottom)}" stroke="#e5e5e5"/>')
        out.append(f'<line x1="{_fmt(px)}" y1="{_fmt(area.bottom)}" x2="{_fmt(px)}" y2="{_fmt(area.bottom + 5)}" stroke="#000000"/>')
        out.append(f'<text x="{_fmt(px)}" y="{_fmt(area.bottom + 18)}">{_label(t)}</text>')
    out.append("</g>")
    out.append('<g class="y-ticks" font-size="11" text-anchor="end">')
    for t in nice_ticks(area.y_min, area.y_max):
        _, py = area.px(area.x_min, t)
        out.append(f'<line x1="{_fmt(area.left)}" y1="{_fmt(py)}" x2="{_fmt(area.left + area.width)}" y2="{_fmt(py)}" stroke="#e5e5e5"/>')
        out.append(f'<line x1="{_fmt(area.left - 5)}" y1="{_fmt(py)}" x2="{_fmt(area.left)}" y2="{_fmt(py)}" stroke="#000000"/>')
        out.append(f'<text x="{_fmt(area.left - 8)}" y="{_fmt(py + 4)}">{_label(t)}</text>')
    out.append("</g>")

    out.append(
        f'<rect class="plot-area" x="{_fmt(area.left)}" y="{_fmt(area.top)}" width="{_fmt(area.width)}" '
        f'height="{_fmt(area.height)}" fill="none" stroke="#000000"/>'
    )
    out.append(
        f'<text x="{_fmt(area.left + area.width / 2)}" y="{_fmt(meta.height - 15)}" text-anchor="middle" '
        f'font-size="13">{escape(meta.x_label)}</text>'
    )
    cy = area.top + area.height / 2
    out.append(
        f'<text x="18" y="{_fmt(cy)}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {_fmt(cy)})">{escape(meta.y_label)}</text>'
    )

    if meta.reference_x is not None and area.x_min <= meta.reference_x <= area.x_max:
        px, _ = area.px(meta.reference_x, area.y_min)
        out.append(
            f'<line class="reference" x1="{_fmt(px)}" y1="{_fmt(area.top)}" x2="{_fmt(px)}" y2="{_fmt(area.bottom)}" '
            f'stroke="{REFERENCE_COLOR}" stroke-width="1.5"/>'
        )

    legend_x = area.left + area.width + 15
    for i, (name, (xs, ys)) in enumerate(series.items()):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in (area.px(float(x), float(y)) for x, y in zip(xs, ys)))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = area.top + 10 + 20 * i
        out.append(f'<line x1="{_fmt(legend_x)}" y1="{_fmt(ly)}" x2="{_fmt(legend_x + 20)}" y2="{_fmt(ly)}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_fmt(legend_x + 26)}" y="{_fmt(ly + 4)}" font-size="12">{escape(name)}</text>')
    if meta.reference_x is not None and meta.reference_label:
        ly = area.top + 10 + 20 * len(series)
        out.append(
            f'<line x1="{_fmt(legend_x)}" y1="{_fmt(ly)}" x2="{_fmt(legend_x + 20)}" y2="{_fmt(ly)}" '
            f'stroke="{REFERENCE_COLOR}" stroke-width="1.5"/>'
        )
        out.append(f'<text x="{_fmt(legend_x + 26)}" y="{_fmt(ly + 4)}" font-size="12">{escape(meta.reference_label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
