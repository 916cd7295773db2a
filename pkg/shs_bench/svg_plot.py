"""
Minimal SVG line and bar charts for experiment tables.

Output is plain text built from fixed-precision numbers, so the same table
always renders to the same bytes.
"""

from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union
from xml.sax.saxutils import escape

import numpy as np

WIDTH = 640
HEIGHT = 400
MARGIN = (60, 20, 40, 60)  # left, top, right, bottom
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, title: str, x_label: str, y_label: str, y_max: float):
        self.left, self.top, self.right, self.bottom = MARGIN
        self.plot_w = WIDTH - self.left - self.right
        self.plot_h = HEIGHT - self.top - self.bottom
        self.y_max = y_max if y_max > 0 else 1.0
        self.parts: List[str] = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2:.1f}" y="14" text-anchor="middle" font-size="14">{escape(title)}</text>',
            f'<text x="{self.left + self.plot_w / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle">{escape(x_label)}</text>',
            f'<text x="14" y="{self.top + self.plot_h / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 14 {self.top + self.plot_h / 2:.1f})">{escape(y_label)}</text>',
        ]
        self._axes()

    def y(self, value: float) -> float:
        value = 0.0 if not np.isfinite(value) else value
        return self.top + self.plot_h * (1.0 - min(max(value, 0.0), self.y_max) / self.y_max)

    def _axes(self):
        x0, y0 = self.left, self.top + self.plot_h
        self.parts.append(f'<line x1="{x0}" y1="{self.top}" x2="{x0}" y2="{y0}" stroke="black"/>')
        self.parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0 + self.plot_w}" y2="{y0}" stroke="black"/>')
        for i in range(6):
            value = self.y_max * i / 5
            y = self.y(value)
            self.parts.append(f'<line x1="{x0 - 4}" y1="{_fmt(y)}" x2="{x0}" y2="{_fmt(y)}" stroke="black"/>')
            self.parts.append(f'<text x="{x0 - 6}" y="{_fmt(y + 4)}" text-anchor="end">{value:g}</text>')

    def x_tick(self, x: float, label: str):
        y0 = self.top + self.plot_h
        self.parts.append(f'<text x="{_fmt(x)}" y="{y0 + 16}" text-anchor="middle">{escape(label)}</text>')

    def legend(self, names: Sequence[str]):
        for i, name in enumerate(names):
            y = self.top + 6 + 16 * i
            x = self.left + self.plot_w - 150
            self.parts.append(f'<rect x="{x}" y="{y}" width="10" height="10" fill="{PALETTE[i % len(PALETTE)]}"/>')
            self.parts.append(f'<text x="{x + 14}" y="{y + 9}">{escape(name)}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _y_max(values) -> float:
    finite = [v for v in values if np.isfinite(v)]
    top = max(finite) if finite else 1.0
    return 100.0 if 0 < top <= 100.0 else max(top, 1.0)


def line_chart(series: Dict[str, Sequence[Tuple[float, float]]], title: str, x_label: str, y_label: str) -> str:
    """One polyline per series; x positions are spaced evenly by distinct x value."""
    xs = sorted({x for points in series.values() for x, _ in points})
    canvas = _Canvas(title, x_label, y_label, _y_max([y for pts in series.values() for _, y in pts]))
    step = canvas.plot_w / max(len(xs) - 1, 1)
    pos = {x: canvas.left + (step * i if len(xs) > 1 else canvas.plot_w / 2) for i, x in enumerate(xs)}
    for x in xs:
        canvas.x_tick(pos[x], f"{x:g}")
    for i, (name, points) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_fmt(pos[x])},{_fmt(canvas.y(y))}" for x, y in sorted(points))
        canvas.parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in sorted(points):
            canvas.parts.append(f'<circle cx="{_fmt(pos[x])}" cy="{_fmt(canvas.y(y))}" r="3" fill="{color}"/>')
    canvas.legend(list(series))
    return canvas.render()


def bar_chart(groups: Sequence[str], series: Dict[str, Sequence[float]], title: str, y_label: str) -> str:
    """Grouped bars: one group per entry of groups, one bar per series."""
    canvas = _Canvas(title, "", y_label, _y_max([v for values in series.values() for v in values]))
    n_groups = max(len(groups), 1)
    group_w = canvas.plot_w / n_groups
    bar_w = group_w * 0.8 / max(len(series), 1)
    base = canvas.top + canvas.plot_h
    for g, group in enumerate(groups):
        start = canvas.left + g * group_w + group_w * 0.1
        canvas.x_tick(start + group_w * 0.4, group)
        for s, values in enumerate(series.values()):
            y = canvas.y(values[g])
            canvas.parts.append(
                f'<rect x="{_fmt(start + s * bar_w)}" y="{_fmt(y)}" width="{_fmt(bar_w)}" '
                f'height="{_fmt(base - y)}" fill="{PALETTE[s % len(PALETTE)]}"/>'
            )
    canvas.legend(list(series))
    return canvas.render()


def write_svg(svg: str, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(svg)
    return path
