"""Linear network construction: constrained Delaunay triangulation over
region centroids and boundary nodes, pruned to the relative neighbor graph
while keeping boundary-ring and region-adjacency edges.

The Delaunay core is Qhull (via scipy); boundary-segment enforcement and the
restriction to the interior of the constraint polygon are done here, since
Qhull triangulates point sets, not polygons.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import Delaunay

from .errors import GridMapError, ValidationError
from .geometry import Point, Polygon, RegionSet, point_in_polygon

log = logging.getLogger(__name__)

CENTROID = "centroid"
BOUNDARY = "boundary"


@dataclass(frozen=True)
class NetNode:
    id: int
    kind: str  # CENTROID or BOUNDARY
    ref: str | int  # region id, or position index along the boundary ring
    x: float
    y: float

    @property
    def pos(self) -> Point:
        return Point(self.x, self.y)


@dataclass(frozen=True)
class NetEdge:
    a: int
    b: int
    length: float
    constrained_boundary: bool = False
    region_adjacency: bool = False
    rng: bool = False

    def __post_init__(self):
        if self.a == self.b:
            raise ValidationError("degenerate edge (a == b)")
        if not (self.constrained_boundary or self.region_adjacency or self.rng):
            raise ValidationError("edge carries no flag")

    @property
    def key(self) -> tuple[int, int]:
        return (self.a, self.b) if self.a < self.b else (self.b, self.a)


class LinearNetwork:
    """Undirected graph over centroid and boundary nodes with flagged edges."""

    def __init__(self, nodes: list[NetNode], edges: list[NetEdge]):
        self.nodes = list(nodes)
        self.edges = list(edges)
        self._adj: list[list[int]] = [[] for _ in nodes]
        seen = set()
        for e in edges:
            if e.key in seen:
                raise ValidationError(f"duplicate edge {e.key}")
            seen.add(e.key)
            self._adj[e.a].append(e.b)
            self._adj[e.b].append(e.a)
        for lst in self._adj:
            lst.sort()
        self._assert_connected()

    def _assert_connected(self):
        n = len(self.nodes)
        if n == 0:
            raise GridMapError("empty network")
        seen = np.zeros(n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            u = stack.pop()
            for v in self._adj[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        if not seen.all():
            raise GridMapError("linear network is disconnected")

    def coords(self) -> np.ndarray:
        return np.array([(nd.x, nd.y) for nd in self.nodes], dtype=float)

    @property
    def centroid_ids(self) -> list[int]:
        return [nd.id for nd in self.nodes if nd.kind == CENTROID]

    @property
    def boundary_ids(self) -> list[int]:
        return [nd.id for nd in self.nodes if nd.kind == BOUNDARY]

    def neighbors(self, node: int) -> list[int]:
        if not (0 <= node < len(self.nodes)):
            raise KeyError(f"unknown node id {node}")
        return list(self._adj[node])

    def centroid_neighbors(self, node: int) -> list[int]:
        return [v for v in self.neighbors(node) if self.nodes[v].kind == CENTROID]

    def boundary_ring(self) -> Polygon:
        """Current boundary node positions, in ring order."""
        ring = sorted(
            (nd for nd in self.nodes if nd.kind == BOUNDARY), key=lambda nd: nd.ref
        )
        return Polygon([(nd.x, nd.y) for nd in ring])

    def with_coords(self, coords: np.ndarray) -> "LinearNetwork":
        """Same topology with new node positions and refreshed edge lengths."""
        nodes = [replace(nd, x=float(coords[nd.id, 0]), y=float(coords[nd.id, 1])) for nd in self.nodes]
        edges = []
        for e in self.edges:
            length = float(np.hypot(coords[e.a, 0] - coords[e.b, 0], coords[e.a, 1] - coords[e.b, 1]))
            edges.append(replace(e, length=length))
        return LinearNetwork(nodes, edges)


def neighbors(net: LinearNetwork, node: int) -> list[int]:
    """Node ids sharing an edge with ``node``, ascending."""
    return net.neighbors(node)


# ---------------------------------------------------------------------------
# constrained Delaunay triangulation


@dataclass
class Triangulation:
    points: np.ndarray  # (n, 2)
    triangles: list[tuple[int, int, int]]
    constrained: set  # of (i, j) with i < j

    @property
    def edges(self) -> set:
        out = set()
        for t in self.triangles:
            for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                out.add((a, b) if a < b else (b, a))
        return out


def _edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _orient_ld(p, q, r) -> float:
    px, py = np.longdouble(p[0]), np.longdouble(p[1])
    qx, qy = np.longdouble(q[0]), np.longdouble(q[1])
    rx, ry = np.longdouble(r[0]), np.longdouble(r[1])
    return float((qx - px) * (ry - py) - (qy - py) * (rx - px))


def _in_circumcircle(pts, a, b, c, d) -> bool:
    """True if point d is strictly inside the circumcircle of (a, b, c)."""
    rows = []
    for i in (a, b, c):
        x = np.longdouble(pts[i, 0]) - np.longdouble(pts[d, 0])
        y = np.longdouble(pts[i, 1]) - np.longdouble(pts[d, 1])
        rows.append((x, y, x * x + y * y))
    m = rows
    det = (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )
    if _orient_ld(pts[a], pts[b], pts[c]) < 0:
        det = -det
    return det > 0


def _triangulate_cavity(pts, a: int, b: int, chain: list[int]) -> list[tuple[int, int, int]]:
    """Retriangulate the pseudo-polygon a -> chain -> b left behind by edge
    insertion, using the Delaunay criterion on the chain vertices."""
    if not chain:
        return []
    c = chain[0]
    for w in chain[1:]:
        if _in_circumcircle(pts, a, b, c, w):
            c = w
    k = chain.index(c)
    tris = [(a, c, b)]
    tris += _triangulate_cavity(pts, a, c, chain[:k])
    tris += _triangulate_cavity(pts, c, b, chain[k + 1 :])
    return tris


def _insert_constraint(pts, triangles: list, a: int, b: int) -> list:
    """Force edge (a, b) into the triangulation by retriangulating the
    channel of triangles its segment crosses."""
    edge_tris: dict[tuple[int, int], list[int]] = {}
    for idx, t in enumerate(triangles):
        for u, v in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            edge_tris.setdefault(_edge_key(u, v), []).append(idx)

    def side(w):
        o = _orient_ld(pts[a], pts[b], pts[w])
        if o == 0.0:
            raise GridMapError(f"constraint segment ({a},{b}) passes through vertex {w}")
        return 1 if o > 0 else -1

    def crosses(u, v):
        if side(u) == side(v):
            return False
        o3 = _orient_ld(pts[u], pts[v], pts[a])
        o4 = _orient_ld(pts[u], pts[v], pts[b])
        return (o3 > 0) != (o4 > 0)

    start = None
    for idx, t in enumerate(triangles):
        if a in t:
            others = [v for v in t if v != a]
            if crosses(others[0], others[1]):
                start = idx
                break
    if start is None:
        raise GridMapError(f"cannot locate start triangle for constraint ({a},{b})")

    crossed = {start}
    left: list[int] = []
    right: list[int] = []
    u, v = [w for w in triangles[start] if w != a]
    if side(u) < 0:
        u, v = v, u
    left_v, right_v = u, v  # endpoints of the current crossed edge, by side
    left.append(left_v)
    right.append(right_v)
    while True:
        cur_edge = _edge_key(left_v, right_v)
        owners = [i for i in edge_tris[cur_edge] if i not in crossed]
        if not owners:
            raise GridMapError(f"constraint walk failed for edge ({a},{b})")
        nxt = owners[0]
        crossed.add(nxt)
        w = [x for x in triangles[nxt] if x not in cur_edge][0]
        if w == b:
            break
        if side(w) > 0:
            left.append(w)
            left_v = w
        else:
            right.append(w)
            right_v = w

    keep = [t for i, t in enumerate(triangles) if i not in crossed]
    keep += _triangulate_cavity(pts, a, b, left)
    keep += _triangulate_cavity(pts, a, b, right)
    return keep


def build_cdt(nodes, constraint: Polygon) -> Triangulation:
    """Constrained Delaunay triangulation of ``nodes`` in which every ring
    segment of ``constraint`` is an edge, restricted to its interior.

    Every vertex of the constraint polygon must itself be one of ``nodes``.
    """
    pts = np.asarray(
        [(p.x, p.y) if isinstance(p, Point) else (float(p[0]), float(p[1])) for p in nodes],
        dtype=float,
    )
    if len(pts) < 3:
        raise ValidationError("need at least 3 points to triangulate")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    diag = float(np.hypot(*(hi - lo)))
    tol = 1e-9 * diag if diag > 0 else 0.0
    keys = {}
    for i, (x, y) in enumerate(pts):
        key = (round(x / tol), round(y / tol)) if tol else (x, y)
        if key in keys:
            raise ValidationError(f"coincident input points {keys[key]} and {i}")
        keys[key] = i

    index_of = {(x, y): i for i, (x, y) in enumerate(map(tuple, pts))}
    ring_idx = []
    for x, y in constraint.coords:
        i = index_of.get((x, y))
        if i is None:
            raise ValidationError("constraint polygon vertex is not an input node")
        ring_idx.append(i)
    ring_edges = {
        _edge_key(ring_idx[k], ring_idx[(k + 1) % len(ring_idx)]) for k in range(len(ring_idx))
    }
    ring_set = set(ring_idx)
    for i, (x, y) in enumerate(pts):
        if i in ring_set:
            continue
        if not point_in_polygon(Point(x, y), constraint):
            raise ValidationError(f"interior point {i} lies outside the constraint polygon")

    dt = Delaunay(pts)
    if len(dt.coplanar):
        raise ValidationError("triangulation dropped input points (degenerate input)")
    triangles = [tuple(int(v) for v in s) for s in dt.simplices]

    present = Triangulation(pts, triangles, set()).edges
    for e in sorted(ring_edges):
        if e not in present:
            triangles = _insert_constraint(pts, triangles, e[0], e[1])
            present = Triangulation(pts, triangles, set()).edges

    kept = []
    for t in triangles:
        cx = (pts[t[0], 0] + pts[t[1], 0] + pts[t[2], 0]) / 3.0
        cy = (pts[t[0], 1] + pts[t[1], 1] + pts[t[2], 1]) / 3.0
        if point_in_polygon(Point(cx, cy), constraint):
            kept.append(t)
    tri = Triangulation(pts, kept, ring_edges)
    missing = ring_edges - tri.edges
    if missing:
        raise GridMapError(f"constrained edges missing after triangulation: {sorted(missing)}")
    return tri


# ---------------------------------------------------------------------------
# relative neighbor pruning and network assembly


def rng_keep_mask(coords: np.ndarray, candidate_edges: list[tuple[int, int]]) -> list[bool]:
    """Relative-neighbor test for each candidate edge against all points.

    Edge (a, b) survives unless some third point w has
    max(|aw|, |bw|) < |ab| (strictly; ties keep the edge).
    """
    d2 = ((coords[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
    n = len(coords)
    keep = []
    for a, b in candidate_edges:
        w = np.maximum(d2[a], d2[b])
        w[a] = w[b] = np.inf
        keep.append(bool(w.min() >= d2[a, b]) if n > 2 else True)
    return keep


def extract_network(cdt: Triangulation, rs: RegionSet) -> LinearNetwork:
    """Prune the CDT to the relative neighbor graph, protecting constrained
    boundary edges and edges between centroids of adjacent regions; add any
    adjacency edge the CDT happened to miss."""
    m = len(rs.regions)
    pts = cdt.points
    nodes = []
    for i, r in enumerate(rs.regions):
        nodes.append(NetNode(i, CENTROID, r.id, float(pts[i, 0]), float(pts[i, 1])))
    for j in range(m, len(pts)):
        nodes.append(NetNode(j, BOUNDARY, j - m, float(pts[j, 0]), float(pts[j, 1])))

    idx_of_region = {r.id: i for i, r in enumerate(rs.regions)}
    adj_keys = {
        _edge_key(idx_of_region[a], idx_of_region[b]) for a, b in rs.adjacency
    }

    candidates = sorted(cdt.edges)
    mask = rng_keep_mask(pts, candidates)
    keep_rng = {e for e, k in zip(candidates, mask) if k}

    edges = []
    seen = set()
    for e in candidates:
        is_con = e in cdt.constrained
        is_adj = e in adj_keys
        is_rng = e in keep_rng
        if is_con or is_adj or is_rng:
            length = float(np.hypot(*(pts[e[0]] - pts[e[1]])))
            edges.append(
                NetEdge(e[0], e[1], length, constrained_boundary=is_con, region_adjacency=is_adj, rng=is_rng)
            )
            seen.add(e)
    # Adjacency pairs whose centroid-centroid segment the CDT did not produce
    # still get an edge: the network contract promises one per pair.
    for e in sorted(adj_keys - seen):
        length = float(np.hypot(*(pts[e[0]] - pts[e[1]])))
        edges.append(NetEdge(e[0], e[1], length, region_adjacency=True))
    return LinearNetwork(nodes, edges)


def build_network(rs: RegionSet, boundary: Polygon | None = None, centroid_positions=None) -> LinearNetwork:
    """Full network construction for a region set.

    ``boundary`` defaults to the region set's own boundary (pass a simplified
    one to reduce node count); ``centroid_positions`` overrides the region
    centroids (used by the noise strategy). Centroids sitting exactly on the
    boundary ring are nudged inward by 1e-6 of the grid size.
    """
    from .snake import grid_size

    bound = boundary if boundary is not None else rs.boundary
    cents = centroid_positions if centroid_positions is not None else rs.centroids
    cents = [(p.x, p.y) if isinstance(p, Point) else (float(p[0]), float(p[1])) for p in cents]
    s = grid_size(rs.total_area(), len(rs.regions))
    cents = [_nudge_inside(c, bound, 1e-6 * s) for c in cents]
    points = [Point(x, y) for x, y in cents] + [Point(x, y) for x, y in bound.coords]
    cdt = build_cdt(points, bound)
    return extract_network(cdt, rs)


def _nudge_inside(c, bound: Polygon, delta: float):
    x, y = c
    coords = bound.coords
    a = coords
    b = np.roll(coords, -1, axis=0)
    ab = b - a
    aq = np.array([x, y]) - a
    seg_len = np.hypot(ab[:, 0], ab[:, 1])
    cross = ab[:, 0] * aq[:, 1] - ab[:, 1] * aq[:, 0]
    t = np.einsum("ij,ij->i", aq, ab) / np.maximum(seg_len**2, 1e-300)
    dist = np.abs(cross) / np.maximum(seg_len, 1e-300)
    on = (dist <= 1e-12 * max(seg_len.max(), 1.0)) & (t >= 0.0) & (t <= 1.0)
    hits = np.nonzero(on)[0]
    if len(hits) == 0:
        return (x, y)
    k = hits[0]
    # Boundary ring is CCW, so the interior is to the left of each segment.
    nx = -ab[k, 1] / seg_len[k]
    ny = ab[k, 0] / seg_len[k]
    log.warning("centroid (%g, %g) lies on the boundary; nudging inward", x, y)
    return (x + delta * nx, y + delta * ny)


def network_geojson(net: LinearNetwork) -> dict:
    """Debug dump: edges as LineString features with their flags."""
    feats = []
    for e in net.edges:
        na, nb = net.nodes[e.a], net.nodes[e.b]
        feats.append(
            {
                "type": "Feature",
                "properties": {
                    "constrained_boundary": e.constrained_boundary,
                    "region_adjacency": e.region_adjacency,
                    "rng": e.rng,
                    "length": e.length,
                },
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[na.x, na.y], [nb.x, nb.y]],
                },
            }
        )
    return {"type": "FeatureCollection", "features": feats}


def dump_network_geojson(net: LinearNetwork) -> str:
    return json.dumps(network_geojson(net), indent=2)
