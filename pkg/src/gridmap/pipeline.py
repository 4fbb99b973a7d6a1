"""Pipeline orchestration: configuration, the candidate sweep, and artifact
writing.

One candidate = one (noise level, origin shift) pair. The network is built
and the snake run once per noise level; the grid is fitted once per shift.
Candidates are evaluated concurrently (``GRIDMAP_THREADS`` caps the pool)
and results are collected by index, so artifacts are byte-identical across
runs and thread counts.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import (
    GridMapError,
    InfeasibleGridError,
    InputError,
    ValidationError,
)
from .geometry import Point, Polygon, RegionSet, simplify_boundary
from .gridfit import GridLayout, fit_layout, layout_to_dict
from .network import LinearNetwork, build_network
from .quality import (
    QualityReport,
    candidate_origins,
    gaussian_noise,
    metric_adjacency,
    metric_location,
    metric_orientation,
    metric_shape,
    topsis_select,
)
from .snake import IterationState, SnakeConfig, grid_size, run_snake

log = logging.getLogger(__name__)

_CONFIG_KEYS = {
    "alpha",
    "beta",
    "t_f",
    "epsilon",
    "t_s",
    "lambda",
    "simplify_tol",
    "shifts",
    "md",
    "seeds",
    "topsis_weights",
    "adjacency",
    "rebuild_network",
    "shape_samples",
    "shape_harmonics",
    "report_location_original",
    "outputs",
}
_OUTPUT_KEYS = {"svg", "json", "csv", "trace"}


@dataclass(frozen=True)
class PipelineConfig:
    alpha: float = 100000.0
    beta: float = 100000.0
    t_f: float | None = None  # None -> 0.5 * grid size
    epsilon: float | None = None  # None -> 0.01 * grid size
    t_s: int = 30
    lam: float = 1e-8
    simplify_tol: float = 0.0
    shifts: tuple = tuple(candidate_origins())
    md: tuple = (0.0, 0.02, 0.04)
    seeds: tuple | None = None  # one per md entry; defaults to 0, 1, 2, ...
    topsis_weights: tuple = (0.25, 0.25, 0.25, 0.25)
    adjacency: str = "rook"
    rebuild_network: bool = False
    shape_samples: int = 256
    shape_harmonics: int = 32
    report_location_original: bool = False
    svg: bool = True
    json_out: bool = True
    csv_out: bool = True
    trace: bool = False

    def validate(self) -> "PipelineConfig":
        self.snake_config().validate()
        if self.simplify_tol < 0:
            raise ValidationError("simplify_tol must be >= 0")
        if not self.shifts:
            raise ValidationError("at least one origin shift is required")
        if not self.md:
            raise ValidationError("at least one noise level is required")
        if any(m < 0 for m in self.md):
            raise ValidationError("noise levels must be >= 0")
        if self.seeds is not None and len(self.seeds) != len(self.md):
            raise ValidationError("seeds must match the md list length")
        if self.adjacency not in ("rook", "queen"):
            raise ValidationError(f"unknown adjacency mode {self.adjacency!r}")
        if len(self.topsis_weights) != 4:
            raise ValidationError("topsis_weights must have 4 entries")
        return self

    def snake_config(self) -> SnakeConfig:
        return SnakeConfig(
            alpha=self.alpha,
            beta=self.beta,
            t_f=self.t_f,
            epsilon=self.epsilon,
            t_s=self.t_s,
            lam=self.lam,
            rebuild_network=self.rebuild_network,
        )

    def seed_for(self, md_index: int) -> int:
        if self.seeds is not None:
            return int(self.seeds[md_index])
        return md_index

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        simple = {
            "alpha": "alpha",
            "beta": "beta",
            "t_f": "t_f",
            "epsilon": "epsilon",
            "t_s": "t_s",
            "lambda": "lam",
            "simplify_tol": "simplify_tol",
            "adjacency": "adjacency",
            "rebuild_network": "rebuild_network",
            "shape_samples": "shape_samples",
            "shape_harmonics": "shape_harmonics",
            "report_location_original": "report_location_original",
        }
        for key, attr in simple.items():
            if key in doc:
                kwargs[attr] = doc[key]
        if "shifts" in doc:
            kwargs["shifts"] = tuple((float(a), float(b)) for a, b in doc["shifts"])
        if "md" in doc:
            kwargs["md"] = tuple(float(v) for v in doc["md"])
        if "seeds" in doc and doc["seeds"] is not None:
            kwargs["seeds"] = tuple(int(v) for v in doc["seeds"])
        if "topsis_weights" in doc:
            kwargs["topsis_weights"] = tuple(float(v) for v in doc["topsis_weights"])
        if "outputs" in doc:
            outs = doc["outputs"]
            unknown = set(outs) - _OUTPUT_KEYS
            if unknown:
                raise ValidationError(f"unknown output toggles: {sorted(unknown)}")
            kwargs["svg"] = bool(outs.get("svg", True))
            kwargs["json_out"] = bool(outs.get("json", True))
            kwargs["csv_out"] = bool(outs.get("csv", True))
            kwargs["trace"] = bool(outs.get("trace", False))
        return cls(**kwargs).validate()

    @classmethod
    def from_file(cls, path: str) -> "PipelineConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read config: {exc}", stage="config") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed config JSON: {exc}", stage="config") from exc
        if not isinstance(doc, dict):
            raise ValidationError("config must be a JSON object", stage="config")
        return cls.from_dict(doc)


@dataclass
class Candidate:
    shift: tuple[float, float]
    md: float
    seed: int
    layout: GridLayout | None
    report: QualityReport | None
    c_location_original: float | None = None
    error: str | None = None


@dataclass
class PipelineResult:
    region_set: RegionSet
    boundary: Polygon  # after optional simplification
    base_network: LinearNetwork
    candidates: list[Candidate]
    chosen_index: int
    closeness: list[float]  # over successful candidates, in candidate order
    snake_runs: dict[int, tuple[LinearNetwork, LinearNetwork, IterationState]] = field(default_factory=dict)
    # md index -> (network before, network after, iteration trace)

    @property
    def chosen(self) -> Candidate:
        return self.candidates[self.chosen_index]


def _worker_count() -> int:
    env = os.environ.get("GRIDMAP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring invalid GRIDMAP_THREADS=%r", env)
    return min(4, os.cpu_count() or 1)


def _stage(err: GridMapError, stage: str) -> GridMapError:
    if err.stage is None:
        err.stage = stage
    return err


def run_pipeline(rs: RegionSet, cfg: PipelineConfig) -> PipelineResult:
    """Execute the full sweep and pick the best candidate by TOPSIS."""
    cfg.validate()
    try:
        boundary = (
            simplify_boundary(rs.boundary, cfg.simplify_tol) if cfg.simplify_tol > 0 else rs.boundary
        )
    except GridMapError as exc:
        raise _stage(exc, "simplify")
    try:
        base_net = build_network(rs, boundary=boundary)
    except GridMapError as exc:
        raise _stage(exc, "network")

    s = grid_size(rs.total_area(), len(rs.regions))
    snake_cfg = cfg.snake_config()

    def run_md(mi: int):
        md = cfg.md[mi]
        seed = cfg.seed_for(mi)
        try:
            cents = gaussian_noise(rs.centroids, md, base_net, seed)
            if md == 0.0:
                net0 = base_net
            else:
                net0 = build_network(rs, boundary=boundary, centroid_positions=cents)
        except InputError as exc:
            # Jittered centroids can land outside the boundary; that kills
            # this noise level's candidates, not the whole sweep.
            log.warning("noise level md=%g seed=%d infeasible: %s", md, seed, exc)
            return exc
        try:
            net1, state = run_snake(net0, rs, snake_cfg)
        except GridMapError as exc:
            raise _stage(exc, "snake")
        return net0, net1, state

    md_runs: list = [None] * len(cfg.md)
    workers = _worker_count()
    if workers == 1 or len(cfg.md) == 1:
        for mi in range(len(cfg.md)):
            md_runs[mi] = run_md(mi)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for mi, res in enumerate(pool.map(run_md, range(len(cfg.md)))):
                md_runs[mi] = res
    snake_runs = {mi: r for mi, r in enumerate(md_runs) if not isinstance(r, GridMapError)}

    candidates: list[Candidate] = []
    for mi in range(len(cfg.md)):
        cand_base = dict(md=float(cfg.md[mi]), seed=cfg.seed_for(mi), layout=None, report=None)
        if isinstance(md_runs[mi], GridMapError):
            for shift in cfg.shifts:
                candidates.append(
                    Candidate(shift=(float(shift[0]), float(shift[1])), error=str(md_runs[mi]), **cand_base)
                )
            continue
        net0, net1, state = md_runs[mi]
        moved = [net1.nodes[i].pos for i in net1.centroid_ids]
        new_boundary = net1.boundary_ring()
        for shift in cfg.shifts:
            cand = Candidate(shift=(float(shift[0]), float(shift[1])), **cand_base)
            try:
                layout = fit_layout(new_boundary, s, shift, moved, rs.region_ids)
                report = QualityReport(
                    c_location=metric_location(moved, layout),
                    c_adjacent=metric_adjacency(rs.adjacency, layout, cfg.adjacency),
                    c_orientation=metric_orientation(rs.centroids, net1, layout),
                    c_shape=metric_shape(
                        boundary, layout.outline, cfg.shape_samples, cfg.shape_harmonics
                    ),
                )
                cand.layout = layout
                cand.report = report
                if cfg.report_location_original:
                    cand.c_location_original = metric_location(rs.centroids, layout)
            except InfeasibleGridError as exc:
                log.warning("candidate shift=%s md=%g infeasible: %s", shift, cfg.md[mi], exc)
                cand.error = str(exc)
            candidates.append(cand)

    ok_indices = [i for i, c in enumerate(candidates) if c.report is not None]
    if not ok_indices:
        raise InfeasibleGridError("no feasible candidate layout", stage="gridfit")
    chosen_ok, closeness = topsis_select(
        [candidates[i].report for i in ok_indices], cfg.topsis_weights
    )
    chosen_index = ok_indices[chosen_ok]
    return PipelineResult(
        region_set=rs,
        boundary=boundary,
        base_network=base_net,
        candidates=candidates,
        chosen_index=chosen_index,
        closeness=closeness,
        snake_runs=snake_runs,
    )


# ---------------------------------------------------------------------------
# artifacts


def _atomic_write(path: str, data: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(data)
    os.replace(tmp, path)


def metrics_csv(result: PipelineResult, cfg: PipelineConfig) -> str:
    """One row per candidate, mirroring the sweep tables."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = [
        "shift_x",
        "shift_y",
        "md",
        "seed",
        "c_location",
        "c_adjacent",
        "c_orientation",
        "c_shape",
        "topsis_closeness",
        "chosen",
    ]
    if cfg.report_location_original:
        header.insert(9, "c_location_original")
    writer.writerow(header)
    ok_indices = [i for i, c in enumerate(result.candidates) if c.report is not None]
    closeness_of = {i: result.closeness[k] for k, i in enumerate(ok_indices)}
    for i, c in enumerate(result.candidates):
        if c.report is None:
            continue
        row = [
            repr(c.shift[0]),
            repr(c.shift[1]),
            repr(c.md),
            c.seed,
            repr(c.report.c_location),
            repr(c.report.c_adjacent),
            repr(c.report.c_orientation),
            repr(c.report.c_shape),
            repr(closeness_of[i]),
            1 if i == result.chosen_index else 0,
        ]
        if cfg.report_location_original:
            row.insert(9, repr(c.c_location_original))
        writer.writerow(row)
    return buf.getvalue()


def trace_csv(state: IterationState) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "f_max", "max_displacement", "stop_reason"])
    for rec in state.trace:
        writer.writerow([rec.step, repr(rec.f_max), repr(rec.max_disp), ""])
    writer.writerow(["", "", "" if state.rejected_disp is None else repr(state.rejected_disp), state.stop_reason])
    return buf.getvalue()


def write_artifacts(result: PipelineResult, cfg: PipelineConfig, out_dir: str) -> dict[str, str]:
    """Write layout JSON, metrics CSV, optional trace CSV and SVG renders.

    Returns a name -> path map of everything written.
    """
    from .render import render_layout_svg, render_network_svg, render_regions_svg

    os.makedirs(out_dir, exist_ok=True)
    written = {}
    chosen = result.chosen
    if cfg.json_out:
        path = os.path.join(out_dir, "layout.json")
        _atomic_write(path, json.dumps(layout_to_dict(chosen.layout), indent=2) + "\n")
        written["layout"] = path
    if cfg.csv_out:
        path = os.path.join(out_dir, "metrics.csv")
        _atomic_write(path, metrics_csv(result, cfg))
        written["metrics"] = path
    if cfg.trace:
        mi = list(cfg.md).index(chosen.md)
        state = result.snake_runs[mi][2]
        path = os.path.join(out_dir, "trace.csv")
        _atomic_write(path, trace_csv(state))
        written["trace"] = path
    if cfg.svg:
        mi = list(cfg.md).index(chosen.md)
        net1 = result.snake_runs[mi][1]
        renders = {
            "original_map.svg": render_regions_svg(result.region_set),
            "transformed_network.svg": render_network_svg(net1),
            "grid_map.svg": render_layout_svg(chosen.layout),
        }
        for name, svg in renders.items():
            path = os.path.join(out_dir, name)
            _atomic_write(path, svg)
            written[name] = path
    return written
