"""Hand-written SVG: similarity heatmaps and accuracy-vs-epoch line plots."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

# plasma colormap sampled at 8 evenly spaced stops (dark -> bright)
_PLASMA = np.array(
    [
        [13, 8, 135],
        [84, 2, 163],
        [139, 10, 165],
        [185, 50, 137],
        [219, 92, 104],
        [244, 136, 73],
        [254, 188, 43],
        [240, 249, 33],
    ],
    dtype=np.float64,
)

_LINE_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


def plasma(value: float) -> str:
    """Hex color for ``value`` in [0, 1] (clipped); 0 is the dark end."""
    t = float(np.clip(value, 0.0, 1.0)) * (len(_PLASMA) - 1)
    lo = int(np.floor(t))
    hi = min(lo + 1, len(_PLASMA) - 1)
    rgb = _PLASMA[lo] + (t - lo) * (_PLASMA[hi] - _PLASMA[lo])
    return "#{:02x}{:02x}{:02x}".format(*np.rint(rgb).astype(int))


def heatmap_svg(matrix, labels=None, cell: int = 16) -> str:
    """Cosine-similarity heatmap: similarity 0 (90 degrees) or less is darkest, 1 brightest."""
    m = np.asarray(matrix, dtype=np.float64)
    n = m.shape[0]
    margin = 60 if labels is not None else 4
    size = margin + n * cell + 4
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for r in range(n):
        for c in range(n):
            out.append(
                f'<rect x="{margin + c * cell}" y="{margin + r * cell}" width="{cell}" height="{cell}" '
                f'fill="{plasma(m[r, c])}"><title>{r},{c}: {m[r, c]:.4f}</title></rect>'
            )
    if labels is not None:
        for k, name in enumerate(labels):
            y = margin + k * cell + cell * 0.7
            out.append(f'<text x="{margin - 4}" y="{y:.1f}" font-size="9" text-anchor="end">{escape(str(name))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_plot_svg(series: dict[str, list[tuple[float, float]]], title: str = "", y_label: str = "") -> str:
    """Polylines for each named series of (x, y) points, with min/max axis labels."""
    width, height, pad = 640, 400, 50
    points = [p for pts in series.values() for p in pts]
    if points:
        xs, ys = zip(*points)
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2}" y="20" font-size="14" text-anchor="middle">{escape(title)}</text>',
        f'<text x="{pad}" y="{height - pad + 16}" font-size="10" text-anchor="middle">{x0:g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 16}" font-size="10" text-anchor="middle">{x1:g}</text>',
        f'<text x="{pad - 4}" y="{height - pad}" font-size="10" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{pad - 4}" y="{pad + 4}" font-size="10" text-anchor="end">{y1:.3g}</text>',
        f'<text x="{width / 2}" y="{height - 10}" font-size="11" text-anchor="middle">epoch</text>',
        f'<text x="12" y="{height / 2}" font-size="11" transform="rotate(-90 12 {height / 2})" '
        f'text-anchor="middle">{escape(y_label)}</text>',
    ]
    for k, (name, pts) in enumerate(series.items()):
        color = _LINE_COLORS[k % len(_LINE_COLORS)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        out.append(
            f'<text x="{width - pad + 4}" y="{pad + 14 * k}" font-size="10" fill="{color}">{escape(name)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")
