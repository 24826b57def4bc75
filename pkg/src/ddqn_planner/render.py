"""Dependency-free SVG output for maps, planned paths and training curves."""
from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape, quoteattr

from .gridworld import CellKind, GridMap, Position

CELL_COLOURS = {
    CellKind.FREE: "#ffffff",
    CellKind.OBSTACLE: "#000000",
    CellKind.START: "#2ca02c",
    CellKind.END: "#1f4fd6",
}
CURVE_COLOURS = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".") if v == v else "0"


def _svg(width: float, height: float, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" height="{_fmt(height)}" '
        f'viewBox="0 0 {_fmt(width)} {_fmt(height)}">'
    )
    return "\n".join([head, *body, "</svg>"]) + "\n"


def map_svg(grid: GridMap, path: Sequence[Position] | None = None, cell: int = 20) -> str:
    """One ``rect`` per cell (row ``y = 0`` at the bottom) and an optional path polyline."""
    body = []
    for y in range(grid.height):
        top = (grid.height - 1 - y) * cell
        for x in range(grid.width):
            colour = CELL_COLOURS[CellKind(int(grid.cells[y, x]))]
            body.append(
                f'<rect x="{x * cell}" y="{top}" width="{cell}" height="{cell}" '
                f'fill="{colour}" stroke="#bbbbbb" stroke-width="0.5"/>'
            )
    if path:
        pts = " ".join(
            f"{_fmt((p[0] + 0.5) * cell)},{_fmt((grid.height - 1 - p[1] + 0.5) * cell)}" for p in path
        )
        body.append(
            f'<polyline points="{pts}" fill="none" stroke="#d62728" '
            f'stroke-width="{_fmt(cell / 5)}" stroke-linejoin="round"/>'
        )
    return _svg(grid.width * cell, grid.height * cell, body)


def curves_svg(
    series: Mapping[str, Sequence[float]],
    width: int = 640,
    height: int = 360,
    x_label: str = "episode",
) -> str:
    """Line chart with one polyline per named series, sharing both axes."""
    margin_l, margin_r, margin_t, margin_b = 60, 20, 20 + 16 * len(series), 40
    finite = [v for values in series.values() for v in values if math.isfinite(v)]
    lo, hi = (min(finite), max(finite)) if finite else (0.0, 1.0)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    n = max((len(v) for v in series.values()), default=1)
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b

    def sx(i: int) -> float:
        return margin_l + (plot_w * i / (n - 1) if n > 1 else plot_w / 2)

    def sy(v: float) -> float:
        return margin_t + plot_h * (hi - v) / (hi - lo)

    body = [
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<line x1="{margin_l}" y1="{margin_t + plot_h}" x2="{margin_l + plot_w}" '
        f'y2="{margin_t + plot_h}" stroke="#000000"/>',
        f'<line x1="{margin_l}" y1="{margin_t}" x2="{margin_l}" y2="{margin_t + plot_h}" stroke="#000000"/>',
        f'<text x="{margin_l - 6}" y="{_fmt(sy(hi) + 4)}" text-anchor="end" font-size="11">{_fmt(hi)}</text>',
        f'<text x="{margin_l - 6}" y="{_fmt(sy(lo) + 4)}" text-anchor="end" font-size="11">{_fmt(lo)}</text>',
        f'<text x="{margin_l + plot_w / 2}" y="{height - 10}" text-anchor="middle" font-size="12">'
        f"{escape(x_label)}</text>",
    ]
    if lo < 0 < hi:
        body.append(
            f'<line x1="{margin_l}" y1="{_fmt(sy(0.0))}" x2="{margin_l + plot_w}" y2="{_fmt(sy(0.0))}" '
            'stroke="#999999" stroke-dasharray="4 3"/>'
        )
    for k, (name, values) in enumerate(series.items()):
        colour = CURVE_COLOURS[k % len(CURVE_COLOURS)]
        pts = " ".join(f"{_fmt(sx(i))},{_fmt(sy(v))}" for i, v in enumerate(values) if math.isfinite(v))
        body.append(
            f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="1.2" '
            f"data-series={quoteattr(name)}/>"
        )
        body.append(
            f'<text x="{margin_l + 4}" y="{16 + 16 * k}" font-size="12" fill="{colour}">{escape(name)}</text>'
        )
    return _svg(width, height, body)
