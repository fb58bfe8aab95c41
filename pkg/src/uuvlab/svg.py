"""Minimal SVG line plots (no rendering dependencies)."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .mathcore import wrap_angle

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def render_line_plot(x, series: dict, title: str = "", xlabel: str = "t [s]", ylabel: str = "", width=640, height=240) -> str:
    """SVG text for ``series`` (label -> y array, all sharing ``x``) in one panel."""
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    ml, mr, mt, mb = 56, 110, 28, 36
    pw, ph = width - ml - mr, height - mt - mb
    allv = np.concatenate([v[np.isfinite(v)] for v in ys.values()]) if ys else np.zeros(1)
    lo, hi = (float(allv.min()), float(allv.max())) if allv.size else (0.0, 1.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    x0, x1 = (float(x.min()), float(x.max())) if x.size else (0.0, 1.0)
    if x1 - x0 < 1e-12:
        x1 = x0 + 1.0

    def px(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def py(v):
        return mt + (hi - v) / (hi - lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{ml}" y="{mt - 8}" font-size="13">{escape(title)}</text>',
        f'<text x="{ml + pw / 2:.1f}" y="{height - 6}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{mt + ph / 2:.1f}" transform="rotate(-90 14 {mt + ph / 2:.1f})" text-anchor="middle">{escape(ylabel)}</text>',
    ]
    for v in np.linspace(lo, hi, 5):
        out.append(f'<text x="{ml - 4}" y="{py(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    for v in np.linspace(x0, x1, 6):
        out.append(f'<text x="{px(v):.1f}" y="{mt + ph + 14}" text-anchor="middle">{v:.3g}</text>')
    for i, (label, y) in enumerate(ys.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y) if np.isfinite(b))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.3" points="{pts}"/>')
        ly = mt + 14 * (i + 1)
        out.append(f'<line x1="{ml + pw + 8}" y1="{ly - 4}" x2="{ml + pw + 24}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 28}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_plot(path, x, series: dict, **kw) -> None:
    with open(path, "w") as f:
        f.write(render_line_plot(x, series, **kw))


def tracking_plot(path, rows, title: str = "") -> None:
    """Three stacked panels of actual vs reference roll, pitch and yaw from trace rows."""
    t = np.array([r["time"] for r in rows], dtype=float)
    panels = []
    for axis in ("roll", "pitch", "yaw"):
        act = np.array([r[axis] for r in rows], dtype=float)
        ref = np.array([r[axis + "_ref"] for r in rows], dtype=float)
        # show the reference on the branch nearest to the tracked angle
        ref_near = act + wrap_angle(ref - act)
        panels.append((axis, {"actual": act, "reference": ref_near}))
    h = 240
    body = [f'<svg xmlns="http://www.w3.org/2000/svg" width="640" height="{3 * h}">']
    for i, (axis, series) in enumerate(panels):
        panel = render_line_plot(t, series, title=f"{title} {axis}".strip(), ylabel="rad", height=h)
        body.append(f'<g transform="translate(0 {i * h})">{panel}</g>')
    body.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(body) + "\n")
