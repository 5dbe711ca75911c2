"""Minimal SVG line chart: learnt curves over conditional-median points."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT, PAD = 640, 420, 50
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def curves_svg(curves, table, x_label: str = "x", y_label: str = "shaft_power") -> str:
    centres = 0.5 * (table.bin_edges[:-1] + table.bin_edges[1:])
    mx, my = centres[table.valid], table.bin_median[table.valid]
    xs = np.concatenate([c.xs for c in curves] + [mx])
    ys = np.concatenate([c.ys for c in curves] + [my])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def px(x):
        return PAD + (x - x0) / (x1 - x0) * (WIDTH - 2 * PAD)

    def py(y):
        return HEIGHT - PAD - (y - y0) / (y1 - y0) * (HEIGHT - 2 * PAD)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<rect x="{PAD}" y="{PAD}" width="{WIDTH - 2 * PAD}" height="{HEIGHT - 2 * PAD}" '
           'fill="none" stroke="black"/>',
           f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="13">'
           f'{escape(x_label)}</text>',
           f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" font-size="13" '
           f'transform="rotate(-90 14 {HEIGHT / 2})">{escape(y_label)}</text>']
    for v, anchor, xx, yy in ((x0, "start", PAD, HEIGHT - PAD + 16), (x1, "end", WIDTH - PAD, HEIGHT - PAD + 16)):
        out.append(f'<text x="{xx}" y="{yy}" text-anchor="{anchor}" font-size="11">{v:.3g}</text>')
    for v, yy in ((y0, HEIGHT - PAD), (y1, PAD + 10)):
        out.append(f'<text x="{PAD - 4}" y="{yy}" text-anchor="end" font-size="11">{v:.3g}</text>')
    for i, c in enumerate(curves):
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(c.xs, c.ys))
        out.append(f'<polyline class="curve" data-network="{escape(c.network_id)}" fill="none" '
                   f'stroke="{PALETTE[i % len(PALETTE)]}" stroke-width="1.5" points="{pts}"/>')
    out.append('<g class="medians" fill="black">')
    out += [f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="2.5"/>' for x, y in zip(mx, my)]
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
