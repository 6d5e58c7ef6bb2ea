"""Minimal deterministic SVG rendering for reports.

Hand-rolled on purpose: fixed canvas sizes, fixed decimal precision, no
timestamps or generated ids, so identical inputs produce byte-identical
files suitable for golden-file diffs.
"""

from __future__ import annotations

import numpy as np

PALETTE = ("#1f6fb4", "#d13b3b", "#2c8a4b", "#8a2caa", "#c98a1f", "#555555")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _scale(vals, lo_px, hi_px, invert=False):
    vals = np.asarray(vals, dtype=np.float64)
    vmin, vmax = float(vals.min()), float(vals.max())
    if vmax - vmin <= 0:
        vmin -= 0.5
        vmax += 0.5
    pad = 0.05 * (vmax - vmin)
    vmin -= pad
    vmax += pad

    def to_px(v):
        frac = (np.asarray(v) - vmin) / (vmax - vmin)
        if invert:
            frac = 1.0 - frac
        return lo_px + frac * (hi_px - lo_px)

    return to_px


def _polyline(xs, ys, color, width=1.0):
    pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{pts}"/>'


def svg_time_series(series, width=900, height=300, title="") -> str:
    """Overlay plot; ``series`` is a list of (label, t, y) triples."""
    margin = 40
    all_t = np.concatenate([np.asarray(t, dtype=float) for _, t, _ in series])
    all_y = np.concatenate([np.asarray(y, dtype=float) for _, _, y in series])
    tx = _scale(all_t, margin, width - margin)
    ty = _scale(all_y, margin, height - margin, invert=True)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width // 2}" y="20" text-anchor="middle" '
            f'font-family="monospace" font-size="13">{title}</text>'
        )
    for k, (label, t, y) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        parts.append(_polyline(tx(t), ty(y), color))
        lx, ly = width - margin - 150, margin + 16 * k
        parts.append(f'<rect x="{lx}" y="{ly - 9}" width="12" height="3" fill="{color}"/>')
        parts.append(
            f'<text x="{lx + 18}" y="{ly}" font-family="monospace" font-size="11">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def svg_vcg_loop(x, y, width=400, height=400, title="") -> str:
    """Frontal-plane loop; a constant signal renders as a single point."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    margin = 30
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width // 2}" y="18" text-anchor="middle" '
            f'font-family="monospace" font-size="12">{title}</text>'
        )
    if x.size and (np.ptp(x) > 0 or np.ptp(y) > 0):
        px = _scale(x, margin, width - margin)
        py = _scale(y, margin, height - margin, invert=True)
        parts.append(_polyline(px(x), py(y), PALETTE[0]))
    else:
        parts.append(
            f'<circle cx="{width // 2}" cy="{height // 2}" r="2" fill="{PALETTE[0]}"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def svg_heatmap(matrix, labels, width=540, height=540, title="") -> str:
    """Grid heatmap with per-cell values (accuracy-matrix style)."""
    m = np.asarray(matrix, dtype=float)
    n = m.shape[0]
    margin = 50
    cell = (min(width, height) - 2 * margin) / n
    lo, hi = float(np.min(m)), float(np.max(m))
    span = hi - lo if hi > lo else 1.0

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width // 2}" y="20" text-anchor="middle" '
            f'font-family="monospace" font-size="13">{title}</text>'
        )
    for i in range(n):
        for j in range(n):
            frac = (m[i, j] - lo) / span
            shade = int(round(255 - 155 * frac))
            x0 = margin + j * cell
            y0 = margin + i * cell
            parts.append(
                f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(cell)}" '
                f'height="{_fmt(cell)}" fill="rgb({shade},{shade},255)" '
                f'stroke="#cccccc" stroke-width="0.5"/>'
            )
            parts.append(
                f'<text x="{_fmt(x0 + cell / 2)}" y="{_fmt(y0 + cell / 2 + 3)}" '
                f'text-anchor="middle" font-family="monospace" font-size="8">'
                f"{m[i, j]:.2f}</text>"
            )
    for k, lab in enumerate(labels):
        cxy = margin + (k + 0.5) * cell
        parts.append(
            f'<text x="{_fmt(cxy)}" y="{margin - 8}" text-anchor="middle" '
            f'font-family="monospace" font-size="9">{lab}</text>'
        )
        parts.append(
            f'<text x="{margin - 8}" y="{_fmt(cxy + 3)}" text-anchor="end" '
            f'font-family="monospace" font-size="9">{lab}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
