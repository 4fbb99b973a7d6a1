"""Command line interface.

Commands:
  generate  run the full pipeline and write artifacts
  bench     run the pipeline at several boundary simplification levels and
            report node counts and wall time
  render    re-render a saved layout JSON as SVG

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 infeasible grid.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
import time

from .errors import GridMapError, InputError
from .geometry import Point, load_regions, simplify_boundary
from .gridfit import Assignment, GridCell, GridLayout, GridSpec, cell_center, grid_outline
from .pipeline import PipelineConfig, _atomic_write, run_pipeline, write_artifacts

log = logging.getLogger(__name__)


def _load_input(path: str, boundary_path: str | None):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read input: {exc}", stage="load") from exc
    boundary_data = None
    if boundary_path:
        try:
            with open(boundary_path, "rb") as fh:
                boundary_data = fh.read()
        except OSError as exc:
            raise InputError(f"cannot read boundary: {exc}", stage="load") from exc
    try:
        return load_regions(data, boundary_data)
    except GridMapError as exc:
        if exc.stage is None:
            exc.stage = "load"
        raise


def cmd_generate(args) -> int:
    rs = _load_input(args.input, args.boundary)
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    if args.trace:
        cfg = dataclasses.replace(cfg, trace=True)
    result = run_pipeline(rs, cfg)
    written = write_artifacts(result, cfg, args.out)
    chosen = result.chosen
    print(
        f"chosen candidate: shift=({chosen.shift[0]:g}, {chosen.shift[1]:g}) "
        f"md={chosen.md:g} seed={chosen.seed}"
    )
    for name, path in sorted(written.items()):
        print(f"wrote {path}")
    return 0


def _cfg_dict(cfg: PipelineConfig) -> dict:
    return {
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "t_f": cfg.t_f,
        "epsilon": cfg.epsilon,
        "t_s": cfg.t_s,
        "lambda": cfg.lam,
        "simplify_tol": cfg.simplify_tol,
        "shifts": [list(sh) for sh in cfg.shifts],
        "md": list(cfg.md),
        "seeds": list(cfg.seeds) if cfg.seeds is not None else None,
        "topsis_weights": list(cfg.topsis_weights),
        "adjacency": cfg.adjacency,
        "rebuild_network": cfg.rebuild_network,
        "shape_samples": cfg.shape_samples,
        "shape_harmonics": cfg.shape_harmonics,
        "report_location_original": cfg.report_location_original,
    }


def cmd_bench(args) -> int:
    rs = _load_input(args.input, args.boundary)
    base_cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    try:
        tols = [float(t) for t in args.tols.split(",") if t.strip() != ""]
    except ValueError as exc:
        raise InputError(f"bad tolerance list: {exc}", stage="bench") from exc
    if not tols:
        raise InputError("empty tolerance list", stage="bench")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["simplify_tol", "n_region", "n_boundary", "n_sum", "n_ratio", "wall_time_s"])
    for tol in tols:
        cfg = PipelineConfig.from_dict(
            {
                **_cfg_dict(base_cfg),
                "simplify_tol": tol,
                "md": [0.0],
                "shifts": [[0.0, 0.0]],
                "outputs": {"svg": False, "json": False, "csv": False, "trace": False},
            }
        )
        t0 = time.perf_counter()
        run_pipeline(rs, cfg)
        elapsed = time.perf_counter() - t0
        n_region = len(rs.regions)
        boundary = simplify_boundary(rs.boundary, tol) if tol > 0 else rs.boundary
        n_boundary = len(boundary)
        writer.writerow(
            [repr(tol), n_region, n_boundary, n_region + n_boundary, repr(n_region / n_boundary), repr(elapsed)]
        )
    _atomic_write(args.out, buf.getvalue())
    print(f"wrote {args.out}")
    return 0


def cmd_render(args) -> int:
    from .render import render_layout_svg

    try:
        with open(args.layout, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read layout: {exc}", stage="render") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed layout JSON: {exc}", stage="render") from exc
    layout = _layout_from_dict(doc)
    _atomic_write(args.out, render_layout_svg(layout))
    print(f"wrote {args.out}")
    return 0


def _layout_from_dict(doc: dict) -> GridLayout:
    try:
        origin = Point(float(doc["origin"][0]), float(doc["origin"][1]))
        s = float(doc["s"])
        shift = (float(doc["shift"][0]), float(doc["shift"][1]))
        cells = [
            GridCell(int(c["row"]), int(c["col"]), cell_center(origin, s, int(c["row"]), int(c["col"])), 0.0)
            for c in doc["cells"]
        ]
        cell_index = {(c.row, c.col): i for i, c in enumerate(cells)}
        region_ids = []
        order = []
        for entry in doc["assignment"]:
            region_ids.append(str(entry["region_id"]))
            order.append(cell_index[(int(entry["row"]), int(entry["col"]))])
        total = float(doc.get("total_cost", 0.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"layout JSON missing or malformed field: {exc}", stage="render") from exc
    rows = max(c.row for c in cells) - min(c.row for c in cells) + 1
    cols = max(c.col for c in cells) - min(c.col for c in cells) + 1
    spec = GridSpec(origin=origin, s=s, shift=shift, rows=rows, cols=cols)
    outline = grid_outline(cells, origin, s)
    return GridLayout(
        spec=spec,
        cells=tuple(cells),
        assignment=Assignment(order=tuple(order), total_cost=total),
        outline=outline,
        region_ids=tuple(region_ids),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridmap", description="Turn region polygons into a grid map.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="run the pipeline and write artifacts")
    gen.add_argument("--input", required=True, help="GeoJSON FeatureCollection of region polygons")
    gen.add_argument("--boundary", help="optional GeoJSON polygon overriding the derived boundary")
    gen.add_argument("--config", help="JSON config file")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--trace", action="store_true", help="also write the snake iteration trace CSV")
    gen.set_defaults(func=cmd_generate)

    bench = sub.add_parser("bench", help="time the pipeline at several simplification levels")
    bench.add_argument("--input", required=True)
    bench.add_argument("--boundary")
    bench.add_argument("--config")
    bench.add_argument("--tols", required=True, help="comma-separated simplification tolerances")
    bench.add_argument("--out", required=True, help="output CSV path")
    bench.set_defaults(func=cmd_bench)

    rend = sub.add_parser("render", help="render a saved layout JSON as SVG")
    rend.add_argument("--layout", required=True)
    rend.add_argument("--out", required=True)
    rend.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GridMapError as exc:
        print(f"error {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error [stage=io] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
