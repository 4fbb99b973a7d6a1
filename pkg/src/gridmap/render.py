"""Deterministic standalone SVG renders of pipeline stages.

All output is plain XML built from the input values only, so identical
inputs produce identical bytes. Y coordinates are flipped into SVG's
downward axis while writing.
"""

from __future__ import annotations

from .geometry import RegionSet
from .gridfit import GridLayout, cell_box
from .network import LinearNetwork

_PALETTE = [
    "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3",
    "#fdb462", "#b3de69", "#fccde5", "#d9d9d9", "#bc80bd",
]


def _fmt(v: float) -> str:
    return format(v, ".6g")


class _Canvas:
    def __init__(self, xmin, ymin, xmax, ymax):
        pad = 0.05 * max(xmax - xmin, ymax - ymin, 1e-12)
        self.xmin = xmin - pad
        self.ymax = ymax + pad
        self.width = (xmax - xmin) + 2 * pad
        self.height = (ymax - ymin) + 2 * pad
        self.elements: list[str] = []

    def x(self, v) -> str:
        return _fmt(v - self.xmin)

    def y(self, v) -> str:
        return _fmt(self.ymax - v)

    def polygon(self, coords, fill="none", stroke="#333333", width=None, cls=None):
        pts = " ".join(f"{self.x(x)},{self.y(y)}" for x, y in coords)
        w = _fmt(width if width is not None else self.width / 400.0)
        c = f' class="{cls}"' if cls else ""
        self.elements.append(
            f'<polygon{c} points="{pts}" fill="{fill}" stroke="{stroke}" stroke-width="{w}"/>'
        )

    def line(self, a, b, stroke="#555555", width=None, cls=None):
        w = _fmt(width if width is not None else self.width / 500.0)
        c = f' class="{cls}"' if cls else ""
        self.elements.append(
            f'<line{c} x1="{self.x(a[0])}" y1="{self.y(a[1])}" x2="{self.x(b[0])}" '
            f'y2="{self.y(b[1])}" stroke="{stroke}" stroke-width="{w}"/>'
        )

    def circle(self, p, r, fill="#d62728"):
        self.elements.append(
            f'<circle cx="{self.x(p[0])}" cy="{self.y(p[1])}" r="{_fmt(r)}" fill="{fill}"/>'
        )

    def text(self, p, content, size):
        safe = (
            str(content)
            .replace("&", "&amp;")
            .replace("<", "&lt;")
            .replace(">", "&gt;")
        )
        self.elements.append(
            f'<text x="{self.x(p[0])}" y="{self.y(p[1])}" font-size="{_fmt(size)}" '
            f'font-family="sans-serif" text-anchor="middle" dominant-baseline="middle">{safe}</text>'
        )

    def document(self) -> str:
        body = "\n".join(f"  {el}" for el in self.elements)
        return (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_fmt(self.width)} {_fmt(self.height)}" '
            f'width="800" height="{_fmt(800 * self.height / self.width)}">\n'
            f"{body}\n</svg>\n"
        )


def render_regions_svg(rs: RegionSet) -> str:
    """Input regions with their centroids."""
    xmin, ymin, xmax, ymax = rs.boundary.bbox()
    cv = _Canvas(xmin, ymin, xmax, ymax)
    for i, region in enumerate(rs.regions):
        cv.polygon(region.polygon.coords, fill=_PALETTE[i % len(_PALETTE)])
    cv.polygon(rs.boundary.coords, stroke="#000000", width=cv.width / 250.0)
    r = cv.width / 200.0
    for c in rs.centroids:
        cv.circle((c.x, c.y), r)
    return cv.document()


def render_network_svg(net: LinearNetwork) -> str:
    """Network edges colored by flag, boundary ring emphasized, nodes drawn."""
    coords = net.coords()
    xmin, ymin = coords.min(axis=0)
    xmax, ymax = coords.max(axis=0)
    cv = _Canvas(xmin, ymin, xmax, ymax)
    for e in net.edges:
        a = (net.nodes[e.a].x, net.nodes[e.a].y)
        b = (net.nodes[e.b].x, net.nodes[e.b].y)
        if e.constrained_boundary:
            stroke, cls = "#000000", "boundary"
        elif e.region_adjacency:
            stroke, cls = "#d62728", "adjacency"
        else:
            stroke, cls = "#1f77b4", "rng"
        cv.line(a, b, stroke=stroke, cls=cls)
    r = cv.width / 250.0
    for nd in net.nodes:
        cv.circle((nd.x, nd.y), r, fill="#d62728" if nd.kind == "centroid" else "#555555")
    return cv.document()


def render_layout_svg(layout: GridLayout) -> str:
    """Selected cells as labeled squares."""
    s = layout.spec.s
    boxes = [cell_box(layout.spec.origin, s, c.row, c.col) for c in layout.cells]
    xmin = min(b[0] for b in boxes)
    ymin = min(b[1] for b in boxes)
    xmax = max(b[2] for b in boxes)
    ymax = max(b[3] for b in boxes)
    cv = _Canvas(xmin, ymin, xmax, ymax)
    for i, rid in enumerate(layout.region_ids):
        cell = layout.cell_of(i)
        bx = cell_box(layout.spec.origin, s, cell.row, cell.col)
        ring = [(bx[0], bx[1]), (bx[2], bx[1]), (bx[2], bx[3]), (bx[0], bx[3])]
        cv.polygon(ring, fill=_PALETTE[i % len(_PALETTE)], stroke="#333333", cls="cell")
        cv.text((cell.center.x, cell.center.y), rid, size=0.3 * s)
    cv.polygon(layout.outline.coords, stroke="#000000", width=cv.width / 250.0)
    return cv.document()
