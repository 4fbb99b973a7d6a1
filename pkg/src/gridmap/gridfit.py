"""Grid adaptation and region assignment.

A square lattice anchored at the boundary's top-left bounding-box corner
(optionally shifted by fractions of the cell size) is scored cell by cell:
overlap fraction with the boundary plus a bonus when the cell center lies
inside. The top M cells are kept and regions are matched one-to-one to cell
centers by minimum total squared distance.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InfeasibleGridError, ValidationError
from .geometry import Point, Polygon, box_overlap_area, point_in_polygon

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    origin: Point  # lattice anchor; cells grow right and down from here
    s: float
    shift: tuple[float, float]
    rows: int
    cols: int


@dataclass(frozen=True)
class GridCell:
    row: int
    col: int
    center: Point
    score: float


@dataclass(frozen=True)
class Assignment:
    order: tuple[int, ...]  # region index -> index into the selected cells
    total_cost: float


@dataclass(frozen=True)
class GridLayout:
    spec: GridSpec
    cells: tuple[GridCell, ...]
    assignment: Assignment
    outline: Polygon
    region_ids: tuple[str, ...]

    def cell_of(self, region_index: int) -> GridCell:
        return self.cells[self.assignment.order[region_index]]


def cell_box(origin: Point, s: float, row: int, col: int) -> tuple[float, float, float, float]:
    """(xmin, ymin, xmax, ymax) of the lattice square at (row, col)."""
    xmin = origin.x + col * s
    ymax = origin.y - row * s
    return (xmin, ymax - s, xmin + s, ymax)


def cell_center(origin: Point, s: float, row: int, col: int) -> Point:
    return Point(origin.x + (col + 0.5) * s, origin.y - (row + 0.5) * s)


def lay_grid(boundary: Polygon, s: float, shift: tuple[float, float] = (0.0, 0.0)) -> tuple[GridSpec, list[GridCell]]:
    """All lattice cells with positive-area overlap with the boundary, scored.

    The anchor is (xmin, ymax) of the boundary's bounding box, displaced by
    ``shift`` in fractions of the cell size. Cells are returned in (row, col)
    order with their scores already computed.
    """
    if not s > 0:
        raise ValidationError("cell size must be > 0")
    xmin, ymin, xmax, ymax = boundary.bbox()
    origin = Point(xmin + shift[0] * s, ymax + shift[1] * s)
    col_lo = int(math.floor((xmin - origin.x) / s))
    col_hi = int(math.ceil((xmax - origin.x) / s))
    row_lo = int(math.floor((origin.y - ymax) / s))
    row_hi = int(math.ceil((origin.y - ymin) / s))
    area_eps = 1e-12 * s * s
    cells = []
    for row in range(row_lo, row_hi + 1):
        for col in range(col_lo, col_hi + 1):
            overlap = box_overlap_area(boundary, *cell_box(origin, s, row, col))
            if overlap <= area_eps:
                continue
            center = cell_center(origin, s, row, col)
            score = _score(overlap, center, boundary, s)
            cells.append(GridCell(row=row, col=col, center=center, score=score))
    rows = (max(c.row for c in cells) - min(c.row for c in cells) + 1) if cells else 0
    cols = (max(c.col for c in cells) - min(c.col for c in cells) + 1) if cells else 0
    spec = GridSpec(origin=origin, s=s, shift=(float(shift[0]), float(shift[1])), rows=rows, cols=cols)
    return spec, cells


def _score(overlap: float, center: Point, boundary: Polygon, s: float) -> float:
    return overlap / (s * s) + (1.0 if point_in_polygon(center, boundary) else 0.0)


def cell_score(cell: GridCell, boundary: Polygon, origin: Point, s: float) -> float:
    """Overlap fraction plus 1 when the cell center is inside the boundary.

    Cells are ranked by descending score, so full coverage with an interior
    center is best (2.0) and a sliver with an exterior center worst (~0).
    """
    bx = cell_box(origin, s, cell.row, cell.col)
    overlap = box_overlap_area(boundary, *bx)
    return _score(overlap, cell.center, boundary, s)


def select_cells(candidates: list[GridCell], m: int) -> list[GridCell]:
    """The m highest-scoring cells; ties resolved by (row, col) order."""
    if len(candidates) < m:
        raise InfeasibleGridError(
            f"only {len(candidates)} candidate cells for {m} regions; try another shift"
        )
    ranked = sorted(candidates, key=lambda c: (-c.score, c.row, c.col))
    return ranked[:m]


def assign_regions(centroids, cells: list[GridCell]) -> Assignment:
    """Minimum total squared centroid-to-center distance bijection."""
    pts = np.asarray(
        [(p.x, p.y) if isinstance(p, Point) else (float(p[0]), float(p[1])) for p in centroids],
        dtype=float,
    )
    if len(pts) != len(cells):
        raise ValidationError(f"{len(pts)} centroids vs {len(cells)} cells")
    centers = np.array([(c.center.x, c.center.y) for c in cells])
    diff = pts[:, None, :] - centers[None, :, :]
    cost = np.einsum("ijk,ijk->ij", diff, diff)
    rows, cols = linear_sum_assignment(cost)
    total = float(cost[rows, cols].sum())
    order = tuple(int(c) for c in cols)
    return Assignment(order=order, total_cost=total)


def grid_outline(cells: list[GridCell], origin: Point, s: float) -> Polygon:
    """Outer ring of the union of the cell squares.

    Lattice edges shared by two cells cancel; the survivors chain into
    rings. With several rings (disconnected cells or enclosed holes) the
    largest-area ring is returned with a warning.
    """
    counts: dict[tuple, int] = {}
    for c in cells:
        corners = [
            (c.col, c.row),
            (c.col + 1, c.row),
            (c.col + 1, c.row + 1),
            (c.col, c.row + 1),
        ]
        for i in range(4):
            a, b = corners[i], corners[(i + 1) % 4]
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
    border = [seg for seg, n in counts.items() if n == 1]
    nbrs: dict[tuple, list[tuple]] = {}
    for a, b in border:
        nbrs.setdefault(a, []).append(b)
        nbrs.setdefault(b, []).append(a)

    rings = []
    unused = set(border)
    while unused:
        seg = min(unused)
        start, cur = seg
        ring = [start]
        unused.discard(seg)
        while cur != start:
            ring.append(cur)
            options = [v for v in nbrs[cur] if (min(cur, v), max(cur, v)) in unused]
            if not options:
                raise ValidationError("cell outline did not close into a ring")
            nxt = sorted(options)[0]
            unused.discard((min(cur, nxt), max(cur, nxt)))
            cur = nxt
        rings.append(ring)
    if len(rings) > 1:
        log.warning("selected cells are not edge-connected or enclose holes; using largest ring")

    def to_poly(ring):
        # lattice corner (col, row) -> plane coordinates
        pts = [(origin.x + col * s, origin.y - row * s) for col, row in ring]
        return Polygon(pts)

    polys = [to_poly(r) for r in rings]
    areas = [abs(_ring_signed_area(p)) for p in polys]
    best = polys[int(np.argmax(areas))]
    if _ring_signed_area(best) < 0:
        best = Polygon(list(best.coords[::-1]))
    return best


def _ring_signed_area(p: Polygon) -> float:
    x = p.coords[:, 0]
    y = p.coords[:, 1]
    return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def fit_layout(boundary: Polygon, s: float, shift: tuple[float, float], centroids, region_ids) -> GridLayout:
    """lay -> select -> assign -> outline for one candidate layout."""
    m = len(region_ids)
    spec, candidates = lay_grid(boundary, s, shift)
    chosen = select_cells(candidates, m)
    assignment = assign_regions(centroids, chosen)
    outline = grid_outline(chosen, spec.origin, s)
    return GridLayout(
        spec=spec,
        cells=tuple(chosen),
        assignment=assignment,
        outline=outline,
        region_ids=tuple(region_ids),
    )


def layout_to_dict(layout: GridLayout) -> dict:
    return {
        "origin": [layout.spec.origin.x, layout.spec.origin.y],
        "s": layout.spec.s,
        "shift": [layout.spec.shift[0], layout.spec.shift[1]],
        "cells": [{"row": c.row, "col": c.col} for c in layout.cells],
        "assignment": [
            {
                "region_id": rid,
                "row": layout.cell_of(i).row,
                "col": layout.cell_of(i).col,
            }
            for i, rid in enumerate(layout.region_ids)
        ],
        "total_cost": layout.assignment.total_cost,
    }


def layout_to_json(layout: GridLayout) -> str:
    return json.dumps(layout_to_dict(layout), indent=2)
