import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from gridmap.cli import main
from gridmap.errors import (
    GridMapError,
    InfeasibleGridError,
    InputError,
    NumericalError,
    ValidationError,
)
from gridmap.geometry import load_regions
from gridmap.network import build_network
from gridmap.pipeline import PipelineConfig, metrics_csv, run_pipeline
from gridmap.render import render_layout_svg, render_network_svg, render_regions_svg

from datasets import regionset_geojson, tiling_geojson, unit_tiling, wiggly_tiling, write_geojson


@pytest.fixture
def tiling2_file(tmp_path):
    return write_geojson(tiling_geojson(2), tmp_path / "t2.geojson")


class TestGenerate:
    def test_end_to_end_2x2(self, tiling2_file, tmp_path):
        out = tmp_path / "out"
        code = main(["generate", "--input", tiling2_file, "--out", str(out), "--trace"])
        assert code == 0
        layout = json.loads((out / "layout.json").read_text())
        assert len(layout["cells"]) == 4
        assert {e["region_id"] for e in layout["assignment"]} == {
            "r0_0", "r1_0", "r0_1", "r1_1",
        }
        with open(out / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 12  # 4 shifts x 3 noise levels
        chosen = [r for r in rows if r["chosen"] == "1"]
        assert len(chosen) == 1
        assert float(chosen[0]["c_adjacent"]) == 1.0
        assert (out / "trace.csv").exists()
        for name in ("original_map.svg", "transformed_network.svg", "grid_map.svg"):
            ET.fromstring((out / name).read_text())  # well-formed XML

    def test_missing_input_exits_2(self, tmp_path):
        code = main(["generate", "--input", str(tmp_path / "nope.geojson"), "--out", str(tmp_path)])
        assert code == 2

    def test_malformed_input_exits_2(self, tmp_path):
        bad = tmp_path / "bad.geojson"
        bad.write_text("{broken")
        code = main(["generate", "--input", str(bad), "--out", str(tmp_path / "o")])
        assert code == 2

    def test_unknown_config_key_exits_2(self, tiling2_file, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"alpa": 5}))
        code = main(["generate", "--input", tiling2_file, "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 2

    def test_config_overrides(self, tiling2_file, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"md": [0.0], "shifts": [[0.0, 0.0]], "t_s": 5}))
        out = tmp_path / "out"
        code = main(["generate", "--input", tiling2_file, "--config", str(cfg), "--out", str(out)])
        assert code == 0
        with open(out / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1

    def test_deterministic_artifacts(self, tiling2_file, tmp_path, monkeypatch):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        assert main(["generate", "--input", tiling2_file, "--out", str(out1)]) == 0
        assert main(["generate", "--input", tiling2_file, "--out", str(out2)]) == 0
        assert (out1 / "layout.json").read_bytes() == (out2 / "layout.json").read_bytes()
        assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()

    def test_thread_count_invariance(self, tiling2_file, tmp_path, monkeypatch):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        monkeypatch.setenv("GRIDMAP_THREADS", "1")
        assert main(["generate", "--input", tiling2_file, "--out", str(out1)]) == 0
        monkeypatch.setenv("GRIDMAP_THREADS", "3")
        assert main(["generate", "--input", tiling2_file, "--out", str(out2)]) == 0
        assert (out1 / "layout.json").read_bytes() == (out2 / "layout.json").read_bytes()
        assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()

    def test_boundary_override_flag(self, tiling2_file, tmp_path):
        bfile = tmp_path / "b.geojson"
        bfile.write_text(
            json.dumps(
                {
                    "type": "Feature",
                    "geometry": {
                        "type": "Polygon",
                        "coordinates": [[[0, 0], [2, 0], [2, 2], [0, 2], [0, 0]]],
                    },
                }
            )
        )
        out = tmp_path / "out"
        code = main(
            ["generate", "--input", tiling2_file, "--boundary", str(bfile), "--out", str(out)]
        )
        assert code == 0


class TestBench:
    def test_csv_identities(self, tmp_path):
        rs = wiggly_tiling(2, subdiv=8, amplitude=0.08)
        path = write_geojson(regionset_geojson(rs), tmp_path / "w.geojson")
        out = tmp_path / "bench.csv"
        code = main(["bench", "--input", path, "--tols", "0.3,0.01", "--out", str(out)])
        assert code == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        for row in rows:
            assert int(row["n_sum"]) == int(row["n_region"]) + int(row["n_boundary"])
            assert float(row["n_ratio"]) == float(row["n_region"]) / float(row["n_boundary"])
        # Coarser tolerance keeps fewer boundary nodes.
        assert int(rows[0]["n_boundary"]) <= int(rows[1]["n_boundary"])

    def test_bad_tols_exit_2(self, tiling2_file, tmp_path):
        code = main(["bench", "--input", tiling2_file, "--tols", "abc", "--out", str(tmp_path / "x.csv")])
        assert code == 2


class TestRenderCommand:
    def test_render_layout_roundtrip(self, tiling2_file, tmp_path):
        out = tmp_path / "out"
        assert main(["generate", "--input", tiling2_file, "--out", str(out)]) == 0
        svg = tmp_path / "re.svg"
        code = main(["render", "--layout", str(out / "layout.json"), "--out", str(svg)])
        assert code == 0
        root = ET.fromstring(svg.read_text())
        assert root.tag.endswith("svg")

    def test_missing_layout_exit_2(self, tmp_path):
        code = main(["render", "--layout", str(tmp_path / "no.json"), "--out", str(tmp_path / "x.svg")])
        assert code == 2


class TestRenderers:
    def test_network_svg_edge_count(self, tiling3):
        net = build_network(tiling3)
        svg = render_network_svg(net)
        root = ET.fromstring(svg)
        lines = [el for el in root.iter() if el.tag.endswith("line")]
        assert len(lines) == len(net.edges)

    def test_regions_svg_polygon_count(self, tiling3):
        svg = render_regions_svg(tiling3)
        root = ET.fromstring(svg)
        polys = [el for el in root.iter() if el.tag.endswith("polygon")]
        assert len(polys) == len(tiling3.regions) + 1  # regions + boundary

    def test_layout_svg_labels(self, tiling3):
        cfg = PipelineConfig(md=(0.0,), shifts=((0.0, 0.0),))
        res = run_pipeline(tiling3, cfg)
        svg = render_layout_svg(res.chosen.layout)
        root = ET.fromstring(svg)
        texts = [el.text for el in root.iter() if el.tag.endswith("text")]
        assert sorted(texts) == sorted(tiling3.region_ids)


class TestExitCodes:
    def test_mapping(self):
        assert InputError("x").exit_code == 2
        assert ValidationError("x").exit_code == 2
        assert NumericalError("x").exit_code == 3
        assert InfeasibleGridError("x").exit_code == 4
        assert GridMapError("x").exit_code == 1

    def test_stage_in_message(self):
        err = InputError("no such file", stage="load")
        assert "[stage=load]" in str(err)


class TestPipelineConfig:
    def test_defaults_valid(self):
        PipelineConfig().validate()

    def test_unknown_key(self):
        with pytest.raises(ValidationError):
            PipelineConfig.from_dict({"bogus": 1})

    def test_unknown_output_toggle(self):
        with pytest.raises(ValidationError):
            PipelineConfig.from_dict({"outputs": {"png": True}})

    def test_seed_mismatch(self):
        with pytest.raises(ValidationError):
            PipelineConfig.from_dict({"md": [0.0, 0.02], "seeds": [1]})

    def test_lambda_key_maps(self):
        cfg = PipelineConfig.from_dict({"lambda": 1e-6})
        assert cfg.lam == 1e-6

    def test_extreme_noise_fails_only_its_candidates(self, tiling3):
        # md=50 throws centroids far outside the boundary, which invalidates
        # that noise level; the md=0 candidates must still carry the sweep.
        cfg = PipelineConfig(md=(0.0, 50.0), shifts=((0.0, 0.0), (0.5, 0.0)))
        res = run_pipeline(tiling3, cfg)
        failed = [c for c in res.candidates if c.error is not None]
        succeeded = [c for c in res.candidates if c.report is not None]
        assert len(res.candidates) == 4
        assert len(failed) == 2 and all(c.md == 50.0 for c in failed)
        assert len(succeeded) == 2
        assert res.chosen.md == 0.0

    def test_metrics_csv_has_location_variant_column(self, tiling2):
        cfg = PipelineConfig.from_dict(
            {"md": [0.0], "shifts": [[0.0, 0.0]], "report_location_original": True}
        )
        res = run_pipeline(tiling2, cfg)
        text = metrics_csv(res, cfg)
        header = text.splitlines()[0].split(",")
        assert "c_location_original" in header


class TestVoronoiPipeline:
    """Organic irregular tessellation: exercises snapping, CDT constraint
    insertion, and the full sweep on non-lattice data."""

    @staticmethod
    def voronoi_regions(n, seed, w=10.0, h=8.0):
        from scipy.spatial import Voronoi

        rng = np.random.default_rng(seed)
        pts = rng.uniform([0.8, 0.8], [w - 0.8, h - 0.8], size=(n, 2))
        mirrored = [pts]
        for axis, bound in ((0, 0.0), (0, w), (1, 0.0), (1, h)):
            m = pts.copy()
            m[:, axis] = 2 * bound - m[:, axis]
            mirrored.append(m)
        vor = Voronoi(np.vstack(mirrored))
        named = []
        for i in range(n):
            region = vor.regions[vor.point_region[i]]
            assert -1 not in region
            ring = [tuple(vor.vertices[v]) for v in region]
            named.append((f"v{i}", ring))
        return named

    def test_full_sweep_on_voronoi(self):
        from gridmap.geometry import RegionSet, signed_area

        named = self.voronoi_regions(16, seed=3)
        rs = RegionSet.from_polygons(named)
        assert abs(signed_area(rs.boundary)) == pytest.approx(80.0, rel=1e-6)
        cfg = PipelineConfig(svg=False, json_out=False, csv_out=False)
        res = run_pipeline(rs, cfg)
        chosen = res.chosen
        assert chosen.report is not None
        assert 0.0 <= chosen.report.c_adjacent <= 1.0
        assert 0.0 <= chosen.report.c_orientation <= 180.0
        assert 0.0 <= chosen.report.c_shape <= 1.0
        assert len(chosen.layout.cells) == 16

    def test_voronoi_deterministic(self):
        from gridmap.geometry import RegionSet
        from gridmap.gridfit import layout_to_json

        named = self.voronoi_regions(12, seed=9)
        cfg = PipelineConfig(svg=False, json_out=False, csv_out=False)
        a = run_pipeline(RegionSet.from_polygons(named), cfg)
        b = run_pipeline(RegionSet.from_polygons(named), cfg)
        assert layout_to_json(a.chosen.layout) == layout_to_json(b.chosen.layout)
        assert a.closeness == b.closeness


class TestRebuildFlag:
    def test_rebuild_network_runs(self, tiling3):
        from datasets import perturbed_tiling
        from gridmap.network import build_network
        from gridmap.snake import SnakeConfig, run_snake

        rs, cents = perturbed_tiling(3, seed=4, amount=0.3)
        net = build_network(rs, centroid_positions=cents)
        out, state = run_snake(net, rs, SnakeConfig(t_s=3, rebuild_network=True))
        assert state.steps <= 3
        assert len(out.nodes) == len(net.nodes)


class TestLoadStage:
    def test_load_error_carries_stage(self, tmp_path):
        doc = tiling_geojson(2)
        for f in doc["features"]:
            f["properties"].pop("id")
        path = write_geojson(doc, tmp_path / "noid.geojson")
        from gridmap.cli import _load_input

        with pytest.raises(GridMapError) as err:
            _load_input(path, None)
        assert err.value.stage == "load"

    def test_regions_loadable_roundtrip(self, tmp_path):
        rs = unit_tiling(3)
        path = write_geojson(regionset_geojson(rs), tmp_path / "rt.geojson")
        with open(path, "rb") as fh:
            rs2 = load_regions(fh)
        assert rs2.region_ids == rs.region_ids
        assert rs2.adjacency == rs.adjacency
