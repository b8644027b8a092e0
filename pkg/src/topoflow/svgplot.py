"""Dependency-free SVG line charts.

Renders one polyline per series with linear axes, tick labels, and a
legend. Output is a plain string built with fixed number formatting, so
identical inputs always produce identical bytes; charts are rendered from
CSV files, never from live run state.
"""

from __future__ import annotations

import csv
from typing import Mapping, Sequence

from .errors import FormatError

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")

WIDTH, HEIGHT = 800, 520
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 150, 48, 48


def read_xy_csv(path, x_col: int = 0, series_col: int = 1,
                y_col: int | None = None) -> dict[str, list[tuple[float, float]]]:
    """Pull (x, y) points per series id out of a CSV file.

    Columns are picked by index; y defaults to the last column. A first row
    whose x cell is not numeric is treated as a header and skipped.
    """
    series: dict[str, list[tuple[float, float]]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            yc = y_col if y_col is not None else len(row) - 1
            if max(x_col, series_col, yc) >= len(row):
                raise FormatError(f"{path}:{lineno}: expected at least "
                                  f"{max(x_col, series_col, yc) + 1} columns")
            try:
                x = float(row[x_col])
            except ValueError:
                if lineno == 1:
                    continue
                raise FormatError(f"{path}:{lineno}: non-numeric x value {row[x_col]!r}")
            try:
                y = float(row[yc])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric y value {row[yc]!r}")
            series.setdefault(row[series_col], []).append((x, y))
    return series


def _series_order(series: Mapping[str, Sequence[tuple[float, float]]]) -> list[str]:
    def key(name: str):
        try:
            return (0, float(name), name)
        except ValueError:
            return (1, 0.0, name)
    return sorted(series, key=key)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.4g}"


def render_line_chart(series: Mapping[str, Sequence[tuple[float, float]]],
                      title: str = "") -> str:
    """Build the SVG document string; an empty series map yields bare axes."""
    xs = [p[0] for pts in series.values() for p in pts]
    ys = [p[1] for pts in series.values() for p in pts]
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y_lo, y_hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(x: float) -> float:
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{WIDTH // 2}" y="28" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="16">{_escape(title)}</text>')
    # axes
    x0, y0 = MARGIN_L, MARGIN_T + plot_h
    parts.append(f'<line x1="{x0}" y1="{MARGIN_T}" x2="{x0}" y2="{y0}" stroke="black"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{MARGIN_L + plot_w}" y2="{y0}" '
                 f'stroke="black"/>')
    for k in range(5):
        fx = x_lo + (x_hi - x_lo) * k / 4
        fy = y_lo + (y_hi - y_lo) * k / 4
        px, py = _fmt(sx(fx)), _fmt(sy(fy))
        parts.append(f'<line x1="{px}" y1="{y0}" x2="{px}" y2="{y0 + 5}" stroke="black"/>')
        parts.append(f'<text x="{px}" y="{y0 + 20}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{_tick_label(fx)}</text>')
        parts.append(f'<line x1="{x0 - 5}" y1="{py}" x2="{x0}" y2="{py}" stroke="black"/>')
        parts.append(f'<text x="{x0 - 8}" y="{py}" text-anchor="end" dy="4" '
                     f'font-family="sans-serif" font-size="11">{_tick_label(fy)}</text>')
    # polylines and legend
    for idx, name in enumerate(_series_order(series)):
        color = PALETTE[idx % len(PALETTE)]
        pts = sorted(series[name])
        coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in pts)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{coords}"/>')
        ly = MARGIN_T + 14 + 16 * idx
        lx = MARGIN_L + plot_w + 12
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{lx + 24}" y="{ly}" font-family="sans-serif" '
                     f'font-size="11">{_escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))


def plot_csv(csv_path, svg_path=None, x_col: int = 0, series_col: int = 1,
             y_col: int | None = None, title: str = "") -> str:
    """Read a CSV and render it; optionally write the SVG alongside."""
    document = render_line_chart(read_xy_csv(csv_path, x_col, series_col, y_col),
                                 title=title)
    if svg_path is not None:
        with open(svg_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(document)
    return document
