"""Dependency-free SVG line plot of MMD against gradient evaluations (log-log axes)."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
W, H, PAD = 640, 420, 60


def _ticks(lo: float, hi: float) -> list[int]:
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def mmd_svg(rows: list[dict], title: str = "MMD vs gradient evaluations") -> str:
    series: dict[str, list[tuple[float, float]]] = {}
    for r in rows:
        g, m = r.get("grad_evals"), r.get("mmd2")
        if m is None or g is None or g <= 0 or m <= 0:
            continue
        series.setdefault(r["sampler"], []).append((math.log10(g), math.log10(m)))
    pts = [p for s in series.values() for p in s]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
             f'font-family="sans-serif" font-size="12">',
             f'<rect width="{W}" height="{H}" fill="white"/>',
             f'<text x="{W / 2}" y="20" text-anchor="middle">{escape(title)}</text>']
    if not pts:
        parts.append(f'<text x="{W / 2}" y="{H / 2}" text-anchor="middle">no data</text></svg>')
        return "\n".join(parts) + "\n"
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def sx(v):
        return PAD + (v - x0) / (x1 - x0) * (W - 2 * PAD)

    def sy(v):
        return H - PAD - (v - y0) / (y1 - y0) * (H - 2 * PAD)

    parts.append(f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>')
    parts.append(f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>')
    for t in _ticks(x0, x1):
        if x0 <= t <= x1:
            parts.append(f'<text x="{sx(t):.1f}" y="{H - PAD + 16}" text-anchor="middle">1e{t}</text>')
    for t in _ticks(y0, y1):
        if y0 <= t <= y1:
            parts.append(f'<text x="{PAD - 6}" y="{sy(t) + 4:.1f}" text-anchor="end">1e{t}</text>')
    parts.append(f'<text x="{W / 2}" y="{H - 15}" text-anchor="middle">gradient evaluations</text>')
    parts.append(f'<text x="15" y="{H / 2}" transform="rotate(-90 15 {H / 2})" '
                 f'text-anchor="middle">MMD^2</text>')
    for i, (name, s) in enumerate(series.items()):
        color = COLORS[i % len(COLORS)]
        path = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in s)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{path}"/>')
        parts.append(f'<text x="{W - PAD - 90}" y="{PAD + 16 * i}" fill="{color}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
