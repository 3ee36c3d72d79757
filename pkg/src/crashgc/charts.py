"""Plain SVG output: a horizontal bar chart of ranking scores and a confusion heatmap.

Output is a deterministic string (fixed formatting, no timestamps) so charts
can be diffed between runs.
"""

from __future__ import annotations

from html import escape

import numpy as np

from .ingest import CLASS_LABELS

FONT = 'font-family="Helvetica, Arial, sans-serif"'


def _header(width: float, height: float) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" fill="white"/>',
    ]


def bar_chart(labels, values, title: str = "", highlight: int | None = None) -> str:
    """Horizontal bars, first label on top; bars after ``highlight`` are drawn grey."""
    labels = [str(s) for s in labels]
    values = [float(v) for v in values]
    bar_h, gap, left, right, top = 18.0, 6.0, 170.0, 90.0, 46.0
    plot_w = 420.0
    width = left + plot_w + right
    height = top + len(values) * (bar_h + gap) + 30.0
    vmax = max(max(values, default=0.0), 1e-300)
    out = _header(width, height)
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="15" {FONT}>{escape(title)}</text>')
    out.append(f'<line x1="{left:.1f}" y1="{top - 4:.1f}" x2="{left:.1f}" y2="{height - 26:.1f}" stroke="black"/>')
    for i, (label, v) in enumerate(zip(labels, values)):
        y = top + i * (bar_h + gap)
        w = plot_w * max(v, 0.0) / vmax
        fill = "#4c78a8" if highlight is None or i < highlight else "#b8b8b8"
        out.append(f'<text x="{left - 6:.1f}" y="{y + bar_h * 0.72:.1f}" text-anchor="end" font-size="12" {FONT}>'
                   f'{escape(label)}</text>')
        out.append(f'<rect x="{left:.1f}" y="{y:.1f}" width="{w:.2f}" height="{bar_h:.1f}" fill="{fill}"/>')
        out.append(f'<text x="{left + w + 4:.1f}" y="{y + bar_h * 0.72:.1f}" font-size="11" {FONT}>{v:.4g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _cell_colour(v: float) -> str:
    # white -> dark blue
    lo, hi = np.array([247, 251, 255]), np.array([8, 48, 107])
    r, g, b = (lo + (hi - lo) * min(max(v, 0.0), 1.0)).round().astype(int)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(matrix, title: str = "", labels=CLASS_LABELS) -> str:
    """3x3 grid with values to two decimals; rows = true class, columns = predicted."""
    m = np.asarray(matrix, dtype=np.float64)
    cell, left, top = 90.0, 90.0, 70.0
    k = m.shape[0]
    width = left + k * cell + 30.0
    height = top + k * cell + 60.0
    out = _header(width, height)
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="15" {FONT}>{escape(title)}</text>')
    out.append(f'<text x="{left + k * cell / 2:.1f}" y="{top - 30:.1f}" text-anchor="middle" font-size="12" {FONT}>'
               'Predicted label</text>')
    out.append(f'<text x="20" y="{top + k * cell / 2:.1f}" text-anchor="middle" font-size="12" {FONT} '
               f'transform="rotate(-90 20 {top + k * cell / 2:.1f})">True label</text>')
    for j, label in enumerate(labels):
        out.append(f'<text x="{left + (j + 0.5) * cell:.1f}" y="{top - 10:.1f}" text-anchor="middle" '
                   f'font-size="12" {FONT}>{escape(label)}</text>')
    for i, label in enumerate(labels):
        out.append(f'<text x="{left - 10:.1f}" y="{top + (i + 0.5) * cell + 4:.1f}" text-anchor="end" '
                   f'font-size="12" {FONT}>{escape(label)}</text>')
        for j in range(k):
            v = m[i, j]
            x, y = left + j * cell, top + i * cell
            text_fill = "white" if v > 0.5 else "black"
            out.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{cell:.1f}" height="{cell:.1f}" '
                       f'fill="{_cell_colour(v)}" stroke="white"/>')
            out.append(f'<text x="{x + cell / 2:.1f}" y="{y + cell / 2 + 5:.1f}" text-anchor="middle" '
                       f'font-size="16" fill="{text_fill}" {FONT}>{v:.2f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write(path, svg: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
