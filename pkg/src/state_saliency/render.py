"""Grayscale SVG heatmaps (darker cell = larger value)."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np


def _gray(v: float, vmax: float) -> str:
    frac = min(1.0, max(0.0, v / vmax))
    level = int(round(255 * (1.0 - frac)))
    return f"#{level:02x}{level:02x}{level:02x}"


def render_heatmap_svg(
    matrix: np.ndarray | Sequence[Sequence[float]],
    row_labels: Sequence[str] | None = None,
    col_labels: Sequence[str] | None = None,
    cell: int = 10,
    vmax: float = 1.0,
) -> str:
    """One ``rect`` per matrix cell; values are clipped to ``[0, vmax]``."""
    rows = [list(r) for r in matrix]
    if not rows or not rows[0]:
        raise ValueError("heatmap needs a non-empty matrix")
    if len({len(r) for r in rows}) != 1:
        raise ValueError("heatmap matrix is ragged")
    if not vmax > 0:
        raise ValueError("vmax must be positive")
    m = np.asarray(rows, dtype=np.float64)
    n_rows, n_cols = m.shape
    if row_labels is not None and len(row_labels) != n_rows:
        raise ValueError("row label count does not match the matrix")
    if col_labels is not None and len(col_labels) != n_cols:
        raise ValueError("column label count does not match the matrix")
    left = 8 * max((len(s) for s in row_labels), default=0) + 4 if row_labels else 0
    top = 8 * max((len(s) for s in col_labels), default=0) + 4 if col_labels else 0
    width, height = left + n_cols * cell, top + n_rows * cell
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for i in range(n_rows):
        for j in range(n_cols):
            out.append(
                f'<rect x="{left + j * cell}" y="{top + i * cell}" width="{cell}" '
                f'height="{cell}" fill="{_gray(m[i, j], vmax)}"/>'
            )
    font = 'font-family="monospace" font-size="8"'
    if row_labels:
        for i, lab in enumerate(row_labels):
            y = top + i * cell + cell - 2
            out.append(f'<text x="{left - 2}" y="{y}" text-anchor="end" {font}>{escape(lab)}</text>')
    if col_labels:
        for j, lab in enumerate(col_labels):
            x = left + j * cell + cell - 2
            out.append(
                f'<text x="{x}" y="{top - 2}" transform="rotate(-90 {x} {top - 2})" '
                f'{font}>{escape(lab)}</text>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"
