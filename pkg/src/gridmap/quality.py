"""Layout evaluation metrics, candidate-generation strategies, and TOPSIS
ranking of candidate layouts.

Metric conventions: location is a mean distance in input units (lower is
better), adjacency is the preserved fraction in [0, 1] (higher is better),
orientation is a mean absolute angle difference in degrees [0, 180] (lower
is better), and shape is a spectral similarity in [0, 1] (higher is better).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, ValidationError
from .geometry import Point, Polygon, compute_centroid, perimeter
from .gridfit import GridLayout
from .network import LinearNetwork

log = logging.getLogger(__name__)

SHAPE_SAMPLES = 256
SHAPE_HARMONICS = 32


@dataclass(frozen=True)
class QualityReport:
    c_location: float
    c_adjacent: float
    c_orientation: float
    c_shape: float

    def as_row(self) -> list[float]:
        return [self.c_location, self.c_adjacent, self.c_orientation, self.c_shape]


def metric_location(centroids, layout: GridLayout) -> float:
    """Mean distance between (transformed) centroids and assigned cell centers."""
    pts = [(p.x, p.y) if isinstance(p, Point) else (float(p[0]), float(p[1])) for p in centroids]
    if len(pts) != len(layout.region_ids):
        raise ValidationError("centroid count does not match layout")
    total = 0.0
    for i, (x, y) in enumerate(pts):
        c = layout.cell_of(i).center
        total += math.hypot(x - c.x, y - c.y)
    return total / len(pts)


def metric_adjacency(adjacency, layout: GridLayout, mode: str = "rook") -> float:
    """Fraction of region adjacencies preserved as lattice adjacencies."""
    if mode not in ("rook", "queen"):
        raise ValidationError(f"unknown adjacency mode {mode!r}")
    if not adjacency:
        return 1.0
    index = {rid: i for i, rid in enumerate(layout.region_ids)}
    kept = 0
    for a, b in adjacency:
        ca = layout.cell_of(index[a])
        cb = layout.cell_of(index[b])
        dr = abs(ca.row - cb.row)
        dc = abs(ca.col - cb.col)
        if mode == "rook":
            ok = dr + dc == 1
        else:
            ok = max(dr, dc) == 1
        kept += 1 if ok else 0
    return kept / len(adjacency)


def metric_orientation(original_centroids, net: LinearNetwork, layout: GridLayout) -> float:
    """Mean absolute direction change, in degrees, over the centroid links of
    the linear network: original centroid->centroid direction vs. assigned
    cell-center->cell-center direction."""
    pts = [
        (p.x, p.y) if isinstance(p, Point) else (float(p[0]), float(p[1]))
        for p in original_centroids
    ]
    links = [
        (e.a, e.b)
        for e in net.edges
        if net.nodes[e.a].kind == "centroid" and net.nodes[e.b].kind == "centroid"
    ]
    if not links:
        return 0.0
    total = 0.0
    for a, b in links:
        ax, ay = pts[a]
        bx, by = pts[b]
        ca = layout.cell_of(a).center
        cb = layout.cell_of(b).center
        if (ca.x, ca.y) == (cb.x, cb.y):
            log.warning("coincident cell centers on link (%d, %d)", a, b)
            continue
        ang0 = math.degrees(math.atan2(by - ay, bx - ax))
        ang1 = math.degrees(math.atan2(cb.y - ca.y, cb.x - ca.x))
        diff = abs(ang1 - ang0) % 360.0
        if diff > 180.0:
            diff = 360.0 - diff
        total += diff
    return total / len(links)


def shape_signature(p: Polygon, samples: int = SHAPE_SAMPLES, harmonics: int = SHAPE_HARMONICS) -> np.ndarray:
    """Unit-norm magnitude spectrum of the centroid-distance signature.

    The outline is resampled at ``samples`` equal-arc-length points; the
    distance of each to the area centroid forms a periodic signal whose
    Fourier magnitudes (DC dropped, ``harmonics`` kept) describe the shape
    independent of position, scale, rotation, and starting vertex.
    """
    total = perimeter(p)
    if not total > 0:
        raise DegenerateGeometryError("degenerate outline (zero perimeter)")
    c = compute_centroid(p)
    coords = p.coords
    # Canonical phase: start sampling at the smallest vertex so that rotated
    # storage of the same ring yields the same stations.
    k = int(np.lexsort((coords[:, 1], coords[:, 0]))[0])
    coords = np.roll(coords, -k, axis=0)
    seg = np.roll(coords, -1, axis=0) - coords
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    stations = np.arange(samples) * (total / samples)
    idx = np.searchsorted(cum, stations, side="right") - 1
    idx = np.clip(idx, 0, len(coords) - 1)
    frac = (stations - cum[idx]) / seg_len[idx]
    pts = coords[idx] + seg[idx] * frac[:, None]
    r = np.hypot(pts[:, 0] - c.x, pts[:, 1] - c.y)
    spec = np.abs(np.fft.rfft(r))[1 : harmonics + 1]
    norm = float(np.linalg.norm(spec))
    if norm == 0.0:
        return np.zeros(harmonics)
    return spec / norm


def metric_shape(original: Polygon, outline: Polygon, samples: int = SHAPE_SAMPLES, harmonics: int = SHAPE_HARMONICS) -> float:
    """1 - ||sig_a - sig_b|| / 2 over unit-norm spectra, in [0, 1]."""
    fa = shape_signature(original, samples, harmonics)
    fb = shape_signature(outline, samples, harmonics)
    return float(1.0 - np.linalg.norm(fa - fb) / 2.0)


# ---------------------------------------------------------------------------
# candidate strategies


def gaussian_noise(centroids, md: float, net: LinearNetwork, seed: int) -> list[Point]:
    """Displace each centroid by Gaussian noise whose per-axis standard
    deviation is ``md`` times the node's mean distance to its network
    neighbors. Deterministic for a fixed seed; the identity when md = 0."""
    if md < 0:
        raise ValidationError("noise level must be >= 0")
    pts = [
        (p.x, p.y) if isinstance(p, Point) else (float(p[0]), float(p[1]))
        for p in centroids
    ]
    if md == 0.0:
        return [Point(x, y) for x, y in pts]
    coords = net.coords()
    rng = np.random.default_rng(seed)
    out = []
    for i, (x, y) in enumerate(pts):
        nbrs = net.neighbors(i)
        dist = [float(np.hypot(coords[i, 0] - coords[j, 0], coords[i, 1] - coords[j, 1])) for j in nbrs]
        sigma = md * (sum(dist) / len(dist)) if dist else 0.0
        dx, dy = rng.normal(0.0, 1.0, size=2) * sigma
        out.append(Point(x + dx, y + dy))
    return out


def candidate_origins() -> list[tuple[float, float]]:
    """The four origin shifts evaluated by default, in fractions of the cell size."""
    return [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)]


# ---------------------------------------------------------------------------
# TOPSIS

# Criterion directions for (location, adjacency, orientation, shape).
_BENEFIT = (False, True, False, True)


def topsis_select(reports: list[QualityReport], weights=(0.25, 0.25, 0.25, 0.25)) -> tuple[int, list[float]]:
    """Rank candidates by closeness to the ideal solution.

    Columns are vector-normalized and weighted; the ideal takes the best
    value per criterion direction and the anti-ideal the worst. Returns the
    argmax index (ties: lowest index) and all closeness values.
    """
    if not reports:
        raise ValidationError("no candidates to select from")
    w = np.asarray(weights, dtype=float)
    if w.shape != (4,) or (w < 0).any() or w.sum() <= 0:
        raise ValidationError("weights must be 4 nonnegative numbers with positive sum")
    w = w / w.sum()
    x = np.array([r.as_row() for r in reports], dtype=float)
    norms = np.sqrt((x**2).sum(axis=0))
    v = np.zeros_like(x)
    nz = norms > 0
    v[:, nz] = x[:, nz] / norms[nz] * w[nz]
    ideal = np.where(_BENEFIT, v.max(axis=0), v.min(axis=0))
    anti = np.where(_BENEFIT, v.min(axis=0), v.max(axis=0))
    d_plus = np.sqrt(((v - ideal) ** 2).sum(axis=1))
    d_minus = np.sqrt(((v - anti) ** 2).sum(axis=1))
    denom = d_plus + d_minus
    closeness = np.where(denom > 0, np.divide(d_minus, denom, out=np.zeros_like(denom), where=denom > 0), 1.0)
    chosen = int(np.argmax(closeness))
    return chosen, [float(c) for c in closeness]
