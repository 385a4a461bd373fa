"""Plain SVG plot of a series with labeled and detected spans shaded."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

TRUTH_FILL = "#f4a582"
VERDICT_FILL = "#92c5de"
PAD = 20


def _spans(labels) -> list[tuple[int, int]]:
    lab = np.asarray(labels).astype(bool)
    out, i = [], 0
    while i < lab.size:
        if lab[i]:
            j = i
            while j + 1 < lab.size and lab[j + 1]:
                j += 1
            out.append((i, j))
            i = j + 1
        else:
            i += 1
    return out


def render_svg(values, truth=None, verdicts=(), width: int = 800, height: int = 240, title: str = "") -> str:
    y = np.asarray(values, dtype=float)
    n = y.size
    if width < 2 * PAD + 10 or height < 2 * PAD + 10:
        raise ValueError("plot is too small")
    lo, hi = (float(y.min()), float(y.max())) if n else (0.0, 1.0)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    iw, ih = width - 2 * PAD, height - 2 * PAD
    step = iw / max(n - 1, 1)

    def px(i: float) -> float:
        return PAD + i * step

    def py(v: float) -> float:
        return PAD + ih * (1 - (v - lo) / (hi - lo))

    def band(a: int, b: int, fill: str, y0: float, h: float, cls: str) -> str:
        x0 = px(a) - step / 2
        return (f'<rect class="{cls}" x="{max(x0, PAD):.2f}" y="{y0:.2f}" '
                f'width="{min(px(b) + step / 2, PAD + iw) - max(x0, PAD):.2f}" height="{h:.2f}" '
                f'fill="{fill}" fill-opacity="0.5"/>')

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(f'<title>{escape(title)}</title>')
    # truth on the top half, verdicts on the bottom half, so overlaps stay visible
    if truth is not None:
        parts += [band(a, b, TRUTH_FILL, PAD, ih / 2, "truth") for a, b in _spans(truth)]
    for v in verdicts:
        parts.append(band(v.start, v.end, VERDICT_FILL, PAD + ih / 2, ih / 2, "verdict"))
    if n:
        pts = " ".join(f"{px(i):.2f},{py(v):.2f}" for i, v in enumerate(y))
        parts.append(f'<polyline class="series" fill="none" stroke="black" stroke-width="1" points="{pts}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
