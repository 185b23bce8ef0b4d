"""Static SVG heat strips for :class:`~topokde.harness.HistogramMatrix`.

Each column is a vertical strip of bins; the first selector is drawn in blue
and the second in red on top, each cell's opacity set by its display value.
Where both are dense the overlap reads as purple.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

__all__ = ["heat_strip_svg"]

_BLUE = "#1f4fd1"
_RED = "#d12a1f"


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def heat_strip_svg(hist, title: str = "", cell_w: int = 36, cell_h: int = 6) -> str:
    """Render ``hist`` as a standalone SVG document (returned as a string)."""
    nbins, ncols = hist.a.shape
    left, top, bottom = 64, 28 if title else 10, 36
    width = left + ncols * cell_w + 10
    height = top + nbins * cell_h + bottom
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{left}" y="16" font-size="12">{escape(title)}</text>')
    for layer, colour in ((hist.a, _BLUE), (hist.b, _RED)):
        for j in range(ncols):
            x = left + j * cell_w
            for i in range(nbins):
                v = float(layer[i, j])
                if v <= 0:
                    continue
                # low bins at the bottom
                y = top + (nbins - 1 - i) * cell_h
                out.append(f'<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" '
                           f'fill="{colour}" fill-opacity="{v:.4f}"/>')
    base = top + nbins * cell_h
    out.append(f'<rect x="{left}" y="{top}" width="{ncols * cell_w}" '
               f'height="{nbins * cell_h}" fill="none" stroke="black" stroke-width="0.5"/>')
    for j, c in enumerate(hist.columns):
        cx = left + j * cell_w + cell_w / 2
        out.append(f'<text x="{cx}" y="{base + 12}" text-anchor="middle">{escape(str(c))}</text>')
    edges = hist.edges
    for i in (0, nbins // 2, nbins):
        y = top + (nbins - i) * cell_h
        out.append(f'<text x="{left - 4}" y="{y + 3}" text-anchor="end">{_fmt(float(edges[i]))}</text>')
    la, lb = (escape(s) for s in hist.labels)
    out.append(f'<text x="{left}" y="{base + 28}"><tspan fill="{_BLUE}">{la}</tspan> / '
               f'<tspan fill="{_RED}">{lb}</tspan> ({escape(hist.measure)})</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
