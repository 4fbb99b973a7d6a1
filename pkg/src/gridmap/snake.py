"""Active-contour displacement of the linear network.

Each network edge is a cubic-Hermite element resisting stretching (weighted
by ``alpha``) and bending (weighted by ``beta``). Per axis, every node owns
one value DOF and one derivative DOF shared by all incident elements; node
``i`` maps to DOFs ``2i`` and ``2i + 1``. Forces pull region centroids
toward positions equidistant from their neighbors; boundary nodes carry no
force and move only through the stiffness coupling. The x and y systems
share one matrix and are solved independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DegenerateGeometryError, NumericalError, ValidationError
from .geometry import Point, RegionSet
from .network import LinearNetwork

STOP_CONVERGED = "converged"  # max displacement fell to epsilon or below
STOP_DIVERGING = "diverging"  # displacement grew; step rejected
STOP_STEP_LIMIT = "step_limit"  # iteration budget exhausted


@dataclass(frozen=True)
class SnakeConfig:
    alpha: float = 100000.0
    beta: float = 100000.0
    t_f: float | None = None  # None -> 0.5 * grid size at run time
    epsilon: float | None = None  # None -> 0.01 * grid size
    t_s: int = 30
    lam: float = 1e-8
    rebuild_network: bool = False
    # Optional per-iteration multipliers for (alpha, beta); step index -> pair.
    stiffness_schedule: Callable[[int], tuple[float, float]] | None = None

    def validate(self) -> "SnakeConfig":
        if self.alpha < 0 or self.beta < 0 or (self.alpha == 0 and self.beta == 0):
            raise ValidationError("alpha and beta must be >= 0 and not both 0")
        if self.t_f is not None and not self.t_f > 0:
            raise ValidationError("t_f must be > 0")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValidationError("epsilon must be > 0")
        if self.t_s < 0:
            raise ValidationError("t_s must be >= 0")
        if not self.lam > 0:
            raise ValidationError("lambda must be > 0")
        return self


@dataclass
class ForceField:
    vectors: np.ndarray  # (n, 2); zero rows for boundary nodes
    f_max: float  # largest magnitude after clamping
    clamped: bool


@dataclass
class SnakeSystem:
    """Assembled stiffness and per-axis loads over value/derivative DOFs."""

    k: sp.csr_matrix
    loads: np.ndarray  # (2, ndof)
    n_nodes: int
    # COO triplets kept for high-precision residual evaluation.
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray


@dataclass
class StepRecord:
    step: int
    f_max: float
    max_disp: float


@dataclass
class IterationState:
    steps: int
    stop_reason: str
    trace: list[StepRecord] = field(default_factory=list)
    rejected_disp: float | None = None  # set when stopping on divergence


def grid_size(total_area: float, m: int) -> float:
    """Cell edge length: sqrt(area of all regions / region count)."""
    if not total_area > 0:
        raise ValidationError(f"total area must be > 0, got {total_area}")
    if m < 1:
        raise ValidationError(f"region count must be >= 1, got {m}")
    return math.sqrt(total_area / m)


def desired_positions(net: LinearNetwork, s: float) -> dict[int, Point]:
    """Equidistance target for every centroid node.

    Each centroid neighbor j proposes placing node i at distance ``s`` from
    itself along the current direction j -> i; the target is the mean of the
    proposals. A centroid with no centroid neighbors keeps its position.
    """
    if not s > 0:
        raise ValidationError("grid size must be > 0")
    coords = net.coords()
    targets: dict[int, Point] = {}
    for i in net.centroid_ids:
        nbrs = net.centroid_neighbors(i)
        if not nbrs:
            targets[i] = Point(coords[i, 0], coords[i, 1])
            continue
        acc = np.zeros(2)
        for j in nbrs:
            d = coords[i] - coords[j]
            norm = float(np.hypot(d[0], d[1]))
            if norm == 0.0:
                raise DegenerateGeometryError(f"coincident neighbor centroids {i} and {j}")
            acc += coords[j] + s * d / norm
        t = acc / len(nbrs)
        targets[i] = Point(float(t[0]), float(t[1]))
    return targets


def compute_forces(net: LinearNetwork, targets: dict[int, Point], t_f: float) -> ForceField:
    """Target-minus-position force on centroids, zero on boundary nodes.

    If the largest magnitude exceeds ``t_f`` every force is scaled by
    ``t_f / f_max``, preserving directions and relative sizes.
    """
    coords = net.coords()
    vectors = np.zeros_like(coords)
    for i, t in targets.items():
        vectors[i, 0] = t.x - coords[i, 0]
        vectors[i, 1] = t.y - coords[i, 1]
    mags = np.hypot(vectors[:, 0], vectors[:, 1])
    f_max = float(mags.max()) if len(mags) else 0.0
    clamped = False
    if f_max > t_f:
        vectors *= t_f / f_max
        f_max = t_f
        clamped = True
    return ForceField(vectors=vectors, f_max=f_max, clamped=clamped)


def element_stiffness(h: float, alpha: float, beta: float) -> np.ndarray:
    """4x4 stiffness of one segment over (value0, slope0, value1, slope1).

    Cubic-Hermite discretization of stretching plus bending energy; the
    matrix is symmetric with the rigid translation (1, 0, 1, 0) in its
    nullspace.
    """
    if not h > 0:
        raise ValidationError(f"segment length must be > 0, got {h}")
    a = (6.0 * alpha * h**2 + 60.0 * beta) / (5.0 * h**3)
    b = (alpha * h**2 + 60.0 * beta) / (10.0 * h**2)
    c = (2.0 * alpha * h**2 + 60.0 * beta) / (15.0 * h)
    e = (-alpha * h**2 + 60.0 * beta) / (30.0 * h)
    return np.array(
        [
            [a, b, -a, b],
            [b, c, -b, e],
            [-a, -b, a, -b],
            [b, e, -b, c],
        ]
    )


def element_load(h: float, f0: float, f1: float) -> np.ndarray:
    """Work-equivalent load of nodal force components on one segment."""
    if not h > 0:
        raise ValidationError(f"segment length must be > 0, got {h}")
    return np.array(
        [h * f0 / 2.0, h**2 * f0 / 12.0, h * f1 / 2.0, -(h**2) * f1 / 12.0]
    )


def assemble(net: LinearNetwork, forces: ForceField, cfg: SnakeConfig) -> SnakeSystem:
    """Scatter per-edge stiffness and loads into the global system."""
    n = len(net.nodes)
    ndof = 2 * n
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    loads = np.zeros((2, ndof))
    for edge in net.edges:
        dofs = (2 * edge.a, 2 * edge.a + 1, 2 * edge.b, 2 * edge.b + 1)
        ke = element_stiffness(edge.length, cfg.alpha, cfg.beta)
        for i in range(4):
            for j in range(4):
                rows.append(dofs[i])
                cols.append(dofs[j])
                vals.append(ke[i, j])
        for axis in range(2):
            fe = element_load(edge.length, forces.vectors[edge.a, axis], forces.vectors[edge.b, axis])
            for i in range(4):
                loads[axis, dofs[i]] += fe[i]
    rows_a = np.array(rows, dtype=np.int64)
    cols_a = np.array(cols, dtype=np.int64)
    vals_a = np.array(vals, dtype=float)
    k = sp.coo_matrix((vals_a, (rows_a, cols_a)), shape=(ndof, ndof)).tocsr()
    return SnakeSystem(k=k, loads=loads, n_nodes=n, rows=rows_a, cols=cols_a, vals=vals_a)


def _residual_longdouble(system: SnakeSystem, lam_hat: float, d: np.ndarray, f: np.ndarray) -> np.ndarray:
    """f - (K + lam_hat I) d accumulated in extended precision."""
    d_ld = d.astype(np.longdouble)
    kd = np.zeros(len(d), dtype=np.longdouble)
    np.add.at(kd, system.rows, system.vals.astype(np.longdouble) * d_ld[system.cols])
    return f.astype(np.longdouble) - kd - np.longdouble(lam_hat) * d_ld


def solve_full(system: SnakeSystem, lam: float) -> tuple[np.ndarray, float]:
    """Solve (K + lam_hat I) d = f per axis over all DOFs.

    lam_hat = lam * max(diag K). The ridge bounds the response of the rigid
    translation mode, which makes the system badly conditioned by design, so
    the LU solution is polished with extended-precision iterative refinement
    until the true residual is tiny relative to the load. Returns the full
    (2, ndof) solution and lam_hat.
    """
    if not lam > 0:
        raise ValidationError("lambda must be > 0")
    ndof = system.k.shape[0]
    diag = system.k.diagonal()
    lam_hat = lam * float(diag.max())
    a = (system.k + lam_hat * sp.identity(ndof, format="csr")).tocsc()
    lu = splu(a)
    full = np.zeros((2, ndof))
    for axis in range(2):
        f = system.loads[axis]
        fnorm = float(np.linalg.norm(f))
        if fnorm == 0.0:
            continue
        d = lu.solve(f)
        best = None
        for _ in range(8):
            r = _residual_longdouble(system, lam_hat, d, f)
            rnorm = float(np.sqrt(np.sum(r * r)))
            if best is not None and rnorm >= best:
                break  # stagnated at the precision floor
            best = rnorm
            if rnorm <= 1e-13 * fnorm:
                break
            d = d + lu.solve(r.astype(float))
        if not np.all(np.isfinite(d)):
            raise NumericalError(
                f"solver produced non-finite displacements (lam_hat={lam_hat:g}, |f|={fnorm:g})"
            )
        full[axis] = d
    return full, lam_hat


def solve(system: SnakeSystem, lam: float) -> np.ndarray:
    """Per-node displacement vectors: the value-DOF components of the full
    solve; derivative DOFs are solved but not applied to geometry."""
    full, _ = solve_full(system, lam)
    out = np.zeros((system.n_nodes, 2))
    out[:, 0] = full[0, 0::2]
    out[:, 1] = full[1, 0::2]
    return out


def run_snake(net: LinearNetwork, rs: RegionSet, cfg: SnakeConfig) -> tuple[LinearNetwork, IterationState]:
    """Iterate force computation, solve, and displacement until a stop rule
    fires.

    Stops when the maximum displacement falls to epsilon (converged), when it
    exceeds the previous accepted maximum (diverging; the offending step is
    discarded), or when the step budget runs out. The grid size, and with it
    the default force cap and convergence threshold, is fixed from the
    original region areas.
    """
    cfg.validate()
    s = grid_size(rs.total_area(), len(rs.regions))
    t_f = cfg.t_f if cfg.t_f is not None else 0.5 * s
    eps = cfg.epsilon if cfg.epsilon is not None else 0.01 * s

    current = net
    trace: list[StepRecord] = []
    prev_max: float | None = None
    steps = 0
    reason = STOP_STEP_LIMIT
    rejected: float | None = None
    while True:
        if steps >= cfg.t_s:
            reason = STOP_STEP_LIMIT
            break
        step_cfg = cfg
        if cfg.stiffness_schedule is not None:
            ma, mb = cfg.stiffness_schedule(steps)
            step_cfg = SnakeConfig(
                alpha=cfg.alpha * ma,
                beta=cfg.beta * mb,
                t_f=cfg.t_f,
                epsilon=cfg.epsilon,
                t_s=cfg.t_s,
                lam=cfg.lam,
            )
        targets = desired_positions(current, s)
        forces = compute_forces(current, targets, t_f)
        system = assemble(current, forces, step_cfg)
        disp = solve(system, cfg.lam)
        max_disp = float(np.hypot(disp[:, 0], disp[:, 1]).max())
        if prev_max is not None and max_disp > prev_max:
            reason = STOP_DIVERGING
            rejected = max_disp
            break
        current = current.with_coords(current.coords() + disp)
        if cfg.rebuild_network:
            current = _rebuild(current, rs)
        steps += 1
        prev_max = max_disp
        trace.append(StepRecord(step=steps, f_max=forces.f_max, max_disp=max_disp))
        if max_disp <= eps:
            reason = STOP_CONVERGED
            break
    return current, IterationState(steps=steps, stop_reason=reason, trace=trace, rejected_disp=rejected)


def _rebuild(current: LinearNetwork, rs: RegionSet) -> LinearNetwork:
    """Re-run triangulation and pruning at the displaced positions."""
    from .network import build_network

    ring = current.boundary_ring()
    cents = [current.nodes[i].pos for i in current.centroid_ids]
    return build_network(rs, boundary=ring, centroid_positions=cents)
