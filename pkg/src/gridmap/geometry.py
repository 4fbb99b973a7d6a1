"""Planar polygon primitives: centroids, adjacency, boundary extraction,
simplification, containment, and clipping.

Coordinates are planar values in whatever units the input uses; nothing is
reprojected. All functions are pure and all returned objects are treated as
immutable, so values can be shared freely across concurrent pipeline runs.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateGeometryError,
    UnsupportedTopologyError,
    ValidationError,
)

log = logging.getLogger(__name__)

# Relative tolerance (fraction of the bounding-box diagonal) used to merge
# near-identical vertices before adjacency and boundary extraction.
SNAP_RELATIVE_TOL = 1e-9


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError(f"non-finite coordinate ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y


class Polygon:
    """A simple ring stored open (first vertex != last vertex).

    Vertices live in a read-only ``(n, 2)`` float array at ``coords``.
    Construction enforces >= 3 vertices, finite values, and no identical
    consecutive vertices. A zero signed area is allowed at this level so
    that self-intersection checks can be run on bow-tie shapes; operations
    that need a real area raise ``DegenerateGeometryError`` themselves.
    """

    __slots__ = ("coords",)

    def __init__(self, vertices: Sequence):
        arr = np.asarray(
            [(v.x, v.y) if isinstance(v, Point) else (float(v[0]), float(v[1])) for v in vertices],
            dtype=float,
        )
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValidationError("polygon vertices must be 2D points")
        if len(arr) > 1 and np.array_equal(arr[0], arr[-1]):
            arr = arr[:-1]
        if len(arr) < 3:
            raise ValidationError(f"polygon needs >= 3 vertices, got {len(arr)}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("polygon has non-finite coordinates")
        same = np.all(arr == np.roll(arr, -1, axis=0), axis=1)
        if same.any():
            raise ValidationError("polygon has identical consecutive vertices")
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Polygon is immutable")

    def __len__(self) -> int:
        return len(self.coords)

    def __eq__(self, other) -> bool:
        return isinstance(other, Polygon) and np.array_equal(self.coords, other.coords)

    @property
    def points(self) -> list[Point]:
        return [Point(x, y) for x, y in self.coords]

    def bbox(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax)."""
        lo = self.coords.min(axis=0)
        hi = self.coords.max(axis=0)
        return (lo[0], lo[1], hi[0], hi[1])

    def translated(self, dx: float, dy: float) -> "Polygon":
        return Polygon(self.coords + np.array([dx, dy]))


@dataclass(frozen=True)
class Region:
    id: str
    polygon: Polygon


@dataclass(frozen=True)
class RegionSet:
    """Input regions plus everything derived from them at load time."""

    regions: list[Region]
    centroids: list[Point]
    adjacency: frozenset  # of (id_a, id_b) with id_a < id_b
    boundary: Polygon

    @property
    def region_ids(self) -> list[str]:
        return [r.id for r in self.regions]

    def total_area(self) -> float:
        return float(sum(abs(signed_area(r.polygon)) for r in self.regions))

    @classmethod
    def from_polygons(cls, named: Iterable[tuple[str, Sequence]], boundary: Polygon | None = None) -> "RegionSet":
        """Build a RegionSet from (id, vertex list) pairs.

        Vertices are snapped, centroids and rook adjacency computed, and the
        outer boundary derived unless one is supplied explicitly.
        """
        raw = [(str(rid), list(verts)) for rid, verts in named]
        if not raw:
            raise ValidationError("empty region set")
        ids = [rid for rid, _ in raw]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate region ids: {dupes}")
        snapped = _snap_rings([verts for _, verts in raw])
        regions = []
        for rid, ring in zip(ids, snapped):
            poly = Polygon(ring)
            if signed_area(poly) == 0.0:
                raise DegenerateGeometryError(f"region {rid!r} has zero area")
            regions.append(Region(rid, poly))
        rs_adj = _adjacency(regions)
        bound = boundary if boundary is not None else _outer_boundary(regions)
        centroids = [compute_centroid(r.polygon) for r in regions]
        return cls(regions=regions, centroids=centroids, adjacency=rs_adj, boundary=bound)


# ---------------------------------------------------------------------------
# scalar polygon measures


def signed_area(p: Polygon) -> float:
    # Work relative to the first vertex: keeps precision when coordinates
    # are large compared to the polygon itself (projected map units).
    rel = p.coords - p.coords[0]
    x = rel[:, 0]
    y = rel[:, 1]
    return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def perimeter(p: Polygon) -> float:
    d = np.roll(p.coords, -1, axis=0) - p.coords
    return float(np.hypot(d[:, 0], d[:, 1]).sum())


def compute_centroid(p: Polygon) -> Point:
    """Area-weighted centroid (first moment of the enclosed area / area).

    Evaluated relative to the first vertex so the result is translation
    equivariant even when coordinates dwarf the polygon size.
    """
    ox, oy = p.coords[0]
    rel = p.coords - p.coords[0]
    x = rel[:, 0]
    y = rel[:, 1]
    xn = np.roll(x, -1)
    yn = np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * np.sum(cross)
    if a == 0.0:
        raise DegenerateGeometryError("cannot compute centroid of a zero-area polygon")
    cx = float(np.sum((x + xn) * cross) / (6.0 * a))
    cy = float(np.sum((y + yn) * cross) / (6.0 * a))
    return Point(cx + ox, cy + oy)


# ---------------------------------------------------------------------------
# containment


def _on_boundary(qx: float, qy: float, coords: np.ndarray, tol: float) -> bool:
    a = coords
    b = np.roll(coords, -1, axis=0)
    ab = b - a
    aq = np.array([qx, qy]) - a
    cross = ab[:, 0] * aq[:, 1] - ab[:, 1] * aq[:, 0]
    ab2 = np.einsum("ij,ij->i", ab, ab)
    t = np.einsum("ij,ij->i", aq, ab)
    seg_len = np.sqrt(ab2)
    near = np.abs(cross) <= tol * np.maximum(seg_len, 1.0)
    within = (t >= -tol * np.maximum(seg_len, 1.0)) & (t <= ab2 + tol * np.maximum(seg_len, 1.0))
    return bool(np.any(near & within))


def point_in_polygon(q: Point, p: Polygon) -> bool:
    """Ray-casting containment; points on the boundary count as inside."""
    coords = p.coords
    qx, qy = q.x, q.y
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    diag = float(np.hypot(*(hi - lo)))
    if _on_boundary(qx, qy, coords, 1e-12 * max(diag, 1.0)):
        return True
    x = coords[:, 0]
    y = coords[:, 1]
    xn = np.roll(x, -1)
    yn = np.roll(y, -1)
    straddle = (y > qy) != (yn > qy)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x + (qy - y) * (xn - x) / (yn - y)
    hits = straddle & (qx < xint)
    return bool(np.count_nonzero(hits) % 2 == 1)


# ---------------------------------------------------------------------------
# simplicity test


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _segments_conflict(p1, p2, q1, q2, shared_ok: bool) -> bool:
    """True if two segments intersect anywhere other than allowed shared endpoints."""
    d1 = _orient(*p1, *p2, *q1)
    d2 = _orient(*p1, *p2, *q2)
    d3 = _orient(*q1, *q2, *p1)
    d4 = _orient(*q1, *q2, *p2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0.0 not in (d1, d2, d3, d4):
        return True

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    touches = []
    if d1 == 0.0 and on_seg(p1, p2, q1):
        touches.append(q1)
    if d2 == 0.0 and on_seg(p1, p2, q2):
        touches.append(q2)
    if d3 == 0.0 and on_seg(q1, q2, p1):
        touches.append(p1)
    if d4 == 0.0 and on_seg(q1, q2, p2):
        touches.append(p2)
    if not touches:
        return False
    if not shared_ok:
        return True
    shared = {p1, p2} & {q1, q2}
    return any(t not in shared for t in touches)


def polygon_is_simple(p: Polygon) -> bool:
    """True iff no two non-adjacent edges intersect and adjacent edges meet
    only at their shared vertex."""
    coords = p.coords
    n = len(coords)
    pts = [tuple(c) for c in coords]
    for i in range(n):
        p1, p2 = pts[i], pts[(i + 1) % n]
        for j in range(i + 1, n):
            q1, q2 = pts[j], pts[(j + 1) % n]
            adjacent = (j == i + 1) or (i == 0 and j == n - 1)
            if _segments_conflict(p1, p2, q1, q2, shared_ok=adjacent):
                return False
    return True


# ---------------------------------------------------------------------------
# simplification


def _point_segment_distance(q, a, b) -> float:
    ab = (b[0] - a[0], b[1] - a[1])
    ab2 = ab[0] * ab[0] + ab[1] * ab[1]
    if ab2 == 0.0:
        return math.hypot(q[0] - a[0], q[1] - a[1])
    t = ((q[0] - a[0]) * ab[0] + (q[1] - a[1]) * ab[1]) / ab2
    t = min(1.0, max(0.0, t))
    px = a[0] + t * ab[0]
    py = a[1] + t * ab[1]
    return math.hypot(q[0] - px, q[1] - py)


def _douglas_peucker(chain: list, tol: float) -> list:
    """Simplify an open chain, keeping both end points."""
    if len(chain) <= 2:
        return list(chain)
    a, b = chain[0], chain[-1]
    dists = [_point_segment_distance(c, a, b) for c in chain[1:-1]]
    k = int(np.argmax(dists))
    if dists[k] <= tol:
        return [a, b]
    left = _douglas_peucker(chain[: k + 2], tol)
    right = _douglas_peucker(chain[k + 1 :], tol)
    return left[:-1] + right


def simplify_boundary(p: Polygon, tol: float) -> Polygon:
    """Douglas-Peucker ring simplification.

    Anchors are vertex 0 and the vertex farthest from it, so the result is
    stable and idempotent at a fixed tolerance. Collapsing below 3 vertices
    falls back to a minimal triangle of the anchor points plus the point
    farthest from their chord, with a warning.
    """
    if tol < 0:
        raise ValidationError("simplification tolerance must be >= 0")
    if tol == 0.0:
        return p
    pts = [tuple(c) for c in p.coords]
    n = len(pts)
    d0 = [math.hypot(x - pts[0][0], y - pts[0][1]) for x, y in pts]
    far = int(np.argmax(d0))
    chain1 = pts[: far + 1]
    chain2 = pts[far:] + [pts[0]]
    out = _douglas_peucker(chain1, tol)[:-1] + _douglas_peucker(chain2, tol)[:-1]
    if len(out) < 3:
        rest = [q for q in pts if q not in (pts[0], pts[far])]
        third = max(rest, key=lambda q: _point_segment_distance(q, pts[0], pts[far]))
        log.warning("simplification collapsed ring; falling back to 3-vertex hull")
        out = [pts[0], pts[far], third] if far < pts.index(third) else [pts[0], third, pts[far]]
    return Polygon(out)


# ---------------------------------------------------------------------------
# clipping (convex axis-aligned window; used for grid cell overlap areas)


def clip_to_box(coords: np.ndarray, xmin: float, ymin: float, xmax: float, ymax: float) -> np.ndarray:
    """Sutherland-Hodgman clip of an arbitrary ring against a box.

    Returns the clipped ring as an ``(m, 2)`` array (m may be 0). For
    non-convex subjects the output may contain zero-width bridges along the
    window border; its signed area still equals the intersection area.
    """
    def clip_half(poly, inside, intersect):
        out = []
        if not len(poly):
            return out
        s = poly[-1]
        s_in = inside(s)
        for e in poly:
            e_in = inside(e)
            if e_in:
                if not s_in:
                    out.append(intersect(s, e))
                out.append(e)
            elif s_in:
                out.append(intersect(s, e))
            s, s_in = e, e_in
        return out

    def ix_at_x(x0):
        def f(s, e):
            t = (x0 - s[0]) / (e[0] - s[0])
            return (x0, s[1] + t * (e[1] - s[1]))
        return f

    def ix_at_y(y0):
        def f(s, e):
            t = (y0 - s[1]) / (e[1] - s[1])
            return (s[0] + t * (e[0] - s[0]), y0)
        return f

    poly = [tuple(c) for c in coords]
    poly = clip_half(poly, lambda p: p[0] >= xmin, ix_at_x(xmin))
    poly = clip_half(poly, lambda p: p[0] <= xmax, ix_at_x(xmax))
    poly = clip_half(poly, lambda p: p[1] >= ymin, ix_at_y(ymin))
    poly = clip_half(poly, lambda p: p[1] <= ymax, ix_at_y(ymax))
    return np.array(poly, dtype=float).reshape(-1, 2)


def ring_area(coords: np.ndarray) -> float:
    """Absolute shoelace area of a bare coordinate ring."""
    if len(coords) < 3:
        return 0.0
    x = coords[:, 0]
    y = coords[:, 1]
    return abs(float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)))


def box_overlap_area(p: Polygon, xmin: float, ymin: float, xmax: float, ymax: float) -> float:
    return ring_area(clip_to_box(p.coords, xmin, ymin, xmax, ymax))


# ---------------------------------------------------------------------------
# snapping, adjacency, boundary extraction


def _snap_rings(rings: list[list]) -> list[list[tuple[float, float]]]:
    """Merge near-identical vertices across all rings, then drop the
    consecutive duplicates that merging can create."""
    pts = []
    for ring in rings:
        for v in ring:
            if isinstance(v, Point):
                pts.append((v.x, v.y))
            else:
                pts.append((float(v[0]), float(v[1])))
    arr = np.array(pts)
    lo = arr.min(axis=0)
    hi = arr.max(axis=0)
    diag = float(np.hypot(*(hi - lo)))
    tol = SNAP_RELATIVE_TOL * diag if diag > 0 else 0.0
    cells: dict[tuple[int, int], tuple[float, float]] = {}

    def snap(v):
        if isinstance(v, Point):
            x, y = v.x, v.y
        else:
            x, y = float(v[0]), float(v[1])
        if tol == 0.0:
            return (x, y)
        kx = math.floor(x / tol)
        ky = math.floor(y / tol)
        # A point near a quantization boundary may land one cell over from
        # an earlier near-identical vertex, so scan the 3x3 neighborhood.
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                hit = cells.get((kx + dx, ky + dy))
                if hit is not None and math.hypot(x - hit[0], y - hit[1]) <= tol:
                    return hit
        cells[(kx, ky)] = (x, y)
        return (x, y)

    out = []
    for ring in rings:
        snapped = [snap(v) for v in ring]
        dedup = [v for i, v in enumerate(snapped) if i == 0 or v != snapped[i - 1]]
        if len(dedup) > 1 and dedup[-1] == dedup[0]:
            dedup.pop()
        out.append(dedup)
    return out


def _ring_segments(poly: Polygon):
    pts = [tuple(c) for c in poly.coords]
    n = len(pts)
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        yield (min(a, b), max(a, b))


def _adjacency(regions: list[Region]) -> frozenset:
    seg_owner: dict[tuple, set[str]] = {}
    for r in regions:
        for seg in _ring_segments(r.polygon):
            seg_owner.setdefault(seg, set()).add(r.id)
    pairs = set()
    for owners in seg_owner.values():
        if len(owners) >= 2:
            ids = sorted(owners)
            for i in range(len(ids)):
                for j in range(i + 1, len(ids)):
                    pairs.add((ids[i], ids[j]))
    return frozenset(pairs)


def region_adjacency(rs: RegionSet) -> frozenset:
    """Rook contiguity: pairs sharing at least one positive-length segment."""
    return _adjacency(rs.regions)


def _outer_boundary(regions: list[Region]) -> Polygon:
    counts: dict[tuple, int] = {}
    for r in regions:
        for seg in _ring_segments(r.polygon):
            counts[seg] = counts.get(seg, 0) + 1
    border = [seg for seg, c in counts.items() if c == 1]
    if any(c > 2 for c in counts.values()):
        raise UnsupportedTopologyError("an edge is shared by more than two regions")
    if not border:
        raise UnsupportedTopologyError("no boundary edges found")
    nbrs: dict[tuple, list[tuple]] = {}
    for a, b in border:
        nbrs.setdefault(a, []).append(b)
        nbrs.setdefault(b, []).append(a)
    bad = [v for v, ns in nbrs.items() if len(ns) != 2]
    if bad:
        raise UnsupportedTopologyError(
            f"boundary does not chain into one ring ({len(bad)} vertices of odd degree)"
        )
    start = min(nbrs)
    ring = [start]
    prev = None
    cur = start
    while True:
        a, b = nbrs[cur]
        nxt = b if a == prev else a
        if nxt == start:
            break
        ring.append(nxt)
        prev, cur = cur, nxt
        if len(ring) > len(border):
            raise UnsupportedTopologyError("boundary walk did not close")
    if len(ring) != len(border):
        raise UnsupportedTopologyError(
            "boundary edges form more than one ring (holes or islands are unsupported)"
        )
    poly = Polygon(ring)
    if signed_area(poly) < 0:
        ring = ring[::-1]
    # Canonical phase: start at the smallest vertex so equivalent inputs
    # yield byte-identical rings regardless of walk direction.
    k = ring.index(min(ring))
    return Polygon(ring[k:] + ring[:k])


def outer_boundary(rs: RegionSet) -> Polygon:
    """Ring of all region edges that appear exactly once across the set."""
    return _outer_boundary(rs.regions)


# ---------------------------------------------------------------------------
# GeoJSON loading


class InputFormatError(ValidationError):
    """GeoJSON that is syntactically valid JSON but not a usable document."""


def _ring_from_geojson(coordinates, what: str) -> list:
    rings = coordinates
    if len(rings) > 1:
        raise UnsupportedTopologyError(f"{what} has interior rings (holes are unsupported)")
    return [tuple(map(float, xy)) for xy in rings[0]]


def load_regions(source: IO | bytes | str, boundary_source: IO | bytes | str | None = None) -> RegionSet:
    """Parse a GeoJSON FeatureCollection of region polygons.

    Each feature needs an ``id`` (or ``name``) property. MultiPolygon
    features fall back to their largest part with a warning; interior rings
    are rejected. ``boundary_source`` optionally supplies the outer boundary
    as a single-polygon GeoJSON instead of deriving it from the regions.
    """
    doc = _read_json(source)
    if doc.get("type") != "FeatureCollection" or "features" not in doc:
        raise InputFormatError("expected a GeoJSON FeatureCollection")
    named = []
    for idx, feat in enumerate(doc["features"]):
        props = feat.get("properties") or {}
        rid = props.get("id", props.get("name", feat.get("id")))
        if rid is None:
            raise ValidationError(f"feature #{idx} has no 'id' or 'name' property")
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        if gtype == "Polygon":
            ring = _ring_from_geojson(geom["coordinates"], f"feature {rid!r}")
        elif gtype == "MultiPolygon":
            parts = geom["coordinates"]
            areas = [ring_area(np.array(p[0], dtype=float)) for p in parts]
            biggest = parts[int(np.argmax(areas))]
            log.warning("feature %r is a MultiPolygon; keeping only its largest part", rid)
            ring = _ring_from_geojson(biggest, f"feature {rid!r}")
        else:
            raise ValidationError(f"feature {rid!r} has unsupported geometry type {gtype!r}")
        named.append((str(rid), ring))
    boundary = None
    if boundary_source is not None:
        boundary = _load_boundary(boundary_source)
    return RegionSet.from_polygons(named, boundary=boundary)


def _load_boundary(source) -> Polygon:
    doc = _read_json(source)
    if doc.get("type") == "FeatureCollection":
        feats = doc.get("features", [])
        if len(feats) != 1:
            raise ValidationError("boundary file must contain exactly one feature")
        geom = feats[0].get("geometry") or {}
    elif doc.get("type") == "Feature":
        geom = doc.get("geometry") or {}
    else:
        geom = doc
    if geom.get("type") != "Polygon":
        raise ValidationError("boundary geometry must be a Polygon")
    ring = _ring_from_geojson(geom["coordinates"], "boundary")
    poly = Polygon(ring)
    if signed_area(poly) < 0:
        poly = Polygon(list(poly.coords[::-1]))
    return poly


def _read_json(source) -> dict:
    if hasattr(source, "read"):
        raw = source.read()
    else:
        raw = source
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"malformed GeoJSON: {exc}") from exc
