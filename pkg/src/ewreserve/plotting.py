"""Static SVG line charts, one file per panel."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 300
MARGIN = dict(left=70, right=20, top=30, bottom=40)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
MAX_POINTS = 2000


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    return list(np.linspace(lo, hi, n))


def line_chart(series: dict, title: str, ylabel: str, x_range: tuple[int, int]) -> str:
    """``series`` maps a label to a y array indexed by slot 1..T."""
    x0, x1 = x_range
    ys = [np.asarray(y, dtype=float) for y in series.values()]
    finite = np.concatenate([y[np.isfinite(y)] for y in ys]) if ys else np.array([])
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x0) / max(x1 - x0, 1) * pw

    def sy(y):
        return MARGIN["top"] + (hi - y) / (hi - lo) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for tx in _ticks(x0, x1):
        out.append(f'<text x="{sx(tx):.1f}" y="{HEIGHT - MARGIN["bottom"] + 15}" text-anchor="middle">{tx:.0f}</text>')
    for ty in _ticks(lo, hi):
        out.append(f'<text x="{MARGIN["left"] - 5}" y="{sy(ty) + 4:.1f}" text-anchor="end">{ty:.3g}</text>')
    out.append(f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 5}" text-anchor="middle">t</text>')
    out.append(f'<text transform="translate(14,{HEIGHT / 2:.1f}) rotate(-90)" text-anchor="middle">'
               f'{escape(ylabel)}</text>')
    for k, (label, y) in enumerate(series.items()):
        y = np.asarray(y, dtype=float)
        x = np.arange(x0, x0 + len(y))
        if len(y) > MAX_POINTS:
            keep = np.unique(np.linspace(0, len(y) - 1, MAX_POINTS).astype(int))
            x, y = x[keep], y[keep]
        ok = np.isfinite(y)
        if not ok.any():
            continue
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x[ok], y[ok]))
        color = COLORS[k % len(COLORS)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{pts}"/>')
        ly = MARGIN["top"] + 14 + 14 * k
        out.append(f'<text x="{WIDTH - MARGIN["right"] - 5}" y="{ly}" text-anchor="end" fill="{color}">'
                   f'{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_panels(result, run_dir) -> list[Path]:
    run_dir = Path(run_dir)
    horizon = len(result.trace.requests[:result.cfg.horizon])
    xr = (1, horizon)
    req = result.trace.requests[:horizon]
    panels = {
        "requests.svg": line_chart({f"node {n + 1}": req[:, n] for n in range(req.shape[1])},
                                   "Job requests", "requests", xr),
        "avg_regret.svg": line_chart({a: r.avg_regret for a, r in result.runs.items()},
                                     "Average regret", "R_t / t", xr),
        "dist_l2.svg": line_chart({a: r.dist_l2 for a, r in result.runs.items() if a == "ew"},
                                  "Distance between consecutive distributions", "L2 distance", xr),
        "reservation_cost.svg": line_chart({a: r.reservation_cost for a, r in result.runs.items()},
                                           "Reservation cost", "C(A^t)", xr),
        "blocking_cost.svg": line_chart({a: r.blocking_cost for a, r in result.runs.items()},
                                        "Blocking cost", "C_0(A^t, B^t)", xr),
    }
    paths = []
    for name, svg in panels.items():
        p = run_dir / name
        p.write_text(svg)
        paths.append(p)
    return paths
