"""Small SVG writers for learning curves and path overlays.

Plain string building keeps the package free of a plotting dependency.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .envs.continuous import Circle, Rect

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
W, H, PAD = 640, 400, 50


def _svg(width, height, body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
            + "\n".join(body) + "\n</svg>\n")


def _text(x, y, s, size=12, anchor="middle", rotate=None):
    rot = f' transform="rotate({rotate} {x} {y})"' if rotate is not None else ""
    return (f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" font-family="sans-serif" '
            f'text-anchor="{anchor}"{rot}>{escape(str(s))}</text>')


def line_chart(series, title="", xlabel="episode", ylabel=""):
    """``series`` maps a label to a 1D array; x is the 1-based index."""
    arrays = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    finite = [a[np.isfinite(a)] for a in arrays.values() if a.size]
    n = max((a.size for a in arrays.values()), default=1)
    lo = min((a.min() for a in finite if a.size), default=0.0)
    hi = max((a.max() for a in finite if a.size), default=1.0)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    sx = (W - 2 * PAD) / max(n - 1, 1)
    sy = (H - 2 * PAD) / (hi - lo)

    def px(i, v):
        return PAD + i * sx, H - PAD - (v - lo) * sy

    body = [
        f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" '
        'fill="none" stroke="#444"/>',
        _text(W / 2, PAD / 2, title, 14),
        _text(W / 2, H - 12, xlabel),
        _text(14, H / 2, ylabel, rotate=-90),
        _text(PAD - 4, H - PAD, f"{lo:.3g}", 10, "end"),
        _text(PAD - 4, PAD + 10, f"{hi:.3g}", 10, "end"),
        _text(W - PAD, H - PAD + 14, n, 10, "end"),
    ]
    for k, (label, a) in enumerate(arrays.items()):
        color = PALETTE[k % len(PALETTE)]
        # thin long series so files stay small
        step = max(1, a.size // 2000)
        pts = " ".join("%.1f,%.1f" % px(i, v) for i, v in enumerate(a) if i % step == 0
                       and np.isfinite(v))
        body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        body.append(_text(W - PAD - 6, PAD + 16 + 14 * k, label, 11, "end")
                    .replace("<text", f'<text fill="{color}"'))
    return _svg(W, H, body)


def grid_path_svg(cells, path, title=""):
    """Grid map with the visited cells of ``path`` (state indices) drawn on top."""
    n_rows, n_cols = len(cells), len(cells[0])
    size = 36
    colors = {"S": "#cde", "F": "#f4f4f4", "H": "#333", "G": "#7c7"}
    body = [_text(n_cols * size / 2, 18, title, 14)]
    for r, row in enumerate(cells):
        for c, ch in enumerate(row):
            body.append(f'<rect x="{c * size}" y="{30 + r * size}" width="{size}" height="{size}" '
                        f'fill="{colors[ch]}" stroke="#999"/>')
    pts = " ".join(f"{(s % n_cols + 0.5) * size:.1f},{30 + (s // n_cols + 0.5) * size:.1f}"
                   for s in path)
    body.append(f'<polyline fill="none" stroke="#d62728" stroke-width="3" points="{pts}"/>')
    return _svg(n_cols * size, n_rows * size + 30, body)


def field_path_svg(scenario, path, title=""):
    """Continuous scenario with obstacles, goal disc and the trajectory."""
    x0, y0, x1, y1 = scenario.bounds
    scale = 400 / max(x1 - x0, y1 - y0)
    w, h = (x1 - x0) * scale, (y1 - y0) * scale

    def px(x, y):
        return (x - x0) * scale, 30 + h - (y - y0) * scale

    body = [_text(w / 2, 18, title, 14),
            f'<rect x="0" y="30" width="{w:.1f}" height="{h:.1f}" fill="#f8f8f0" stroke="#444"/>']
    for ob in scenario.obstacles:
        if isinstance(ob, Rect):
            ax, ay = px(ob.x, ob.y + ob.h)
            body.append(f'<rect x="{ax:.1f}" y="{ay:.1f}" width="{ob.w * scale:.1f}" '
                        f'height="{ob.h * scale:.1f}" fill="#555"/>')
        elif isinstance(ob, Circle):
            cx, cy = px(ob.cx, ob.cy)
            body.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="{ob.r * scale:.1f}" fill="#555"/>')
    gx, gy = px(*scenario.goal)
    body.append(f'<circle cx="{gx:.1f}" cy="{gy:.1f}" r="{scenario.goal_radius * scale:.1f}" '
                'fill="#7c7" fill-opacity="0.6"/>')
    sx, sy = px(*scenario.start)
    body.append(f'<circle cx="{sx:.1f}" cy="{sy:.1f}" r="4" fill="#1f77b4"/>')
    pts = " ".join("%.1f,%.1f" % px(x, y) for x, y in np.asarray(path).reshape(-1, 2))
    body.append(f'<polyline fill="none" stroke="#d62728" stroke-width="2" points="{pts}"/>')
    return _svg(w, h + 30, body)
