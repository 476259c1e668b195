"""Static overhead SVG: regions as rectangles, one polyline per agent."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
REGION_FILL = {"Obs": "#555555"}


def _extent(regions, trajectories, position):
    xs, ys = [], []
    for b in regions.values():
        xs += [b.xmin, b.xmax]
        ys += [b.ymin, b.ymax]
    for tr in trajectories.values():
        if tr.shape[1] > max(position):
            xs += list(tr[:, position[0]])
            ys += list(tr[:, position[1]])
    if not xs:
        return 0.0, 1.0, 0.0, 1.0
    pad = 0.03 * max(max(xs) - min(xs), max(ys) - min(ys), 1e-9)
    return min(xs) - pad, max(xs) + pad, min(ys) - pad, max(ys) + pad


def render_svg(regions, trajectories, position=(0, 1), width=700, labels=None) -> str:
    """``trajectories``: agent id -> (H+1, n_x) array. 1-D states are drawn
    against time on the horizontal axis."""
    trajectories = {p: np.asarray(t, float) for p, t in trajectories.items()}
    if trajectories and all(t.shape[1] == 1 for t in trajectories.values()):
        trajectories = {p: np.column_stack([np.arange(len(t)), t[:, 0]])
                        for p, t in trajectories.items()}
        position = (0, 1)
    x0, x1, y0, y1 = _extent(regions, trajectories, position)
    scale = width / (x1 - x0)
    height = int(round((y1 - y0) * scale))

    def pt(x, y):
        return (x - x0) * scale, (y1 - y) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white" stroke="black"/>']
    for name, b in regions.items():
        ax, ay = pt(b.xmin, b.ymax)
        w, h = (b.xmax - b.xmin) * scale, (b.ymax - b.ymin) * scale
        fill = REGION_FILL.get(name, "#9ecae1")
        out.append(f'<rect x="{ax:.2f}" y="{ay:.2f}" width="{w:.2f}" height="{h:.2f}" '
                   f'fill="{fill}" fill-opacity="0.25" stroke="#333" stroke-width="0.8"/>')
        out.append(f'<text x="{ax + 3:.2f}" y="{ay + 12:.2f}">{escape(name)}</text>')
    for n, (p, tr) in enumerate(sorted(trajectories.items())):
        c = PALETTE[n % len(PALETTE)]
        pts = [pt(x, y) for x, y in tr[:, list(position)]]
        path = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        out.append(f'<polyline points="{path}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        for k, (x, y) in enumerate(pts):
            out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.5" fill="{c}">'
                       f'<title>agent {p}, k={k}</title></circle>')
        label = (labels or {}).get(p, str(p))
        out.append(f'<text x="{pts[0][0] + 4:.2f}" y="{pts[0][1] - 4:.2f}" fill="{c}">'
                   f'{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
