"""Grid map generation by simultaneous displacement of region centroids and
boundary nodes over a linear network, followed by square-grid fitting and
one-to-one region assignment."""

from .geometry import Point, Polygon, Region, RegionSet, load_regions
from .gridfit import GridLayout, fit_layout
from .network import LinearNetwork, build_network
from .pipeline import PipelineConfig, PipelineResult, run_pipeline
from .quality import QualityReport, topsis_select
from .snake import SnakeConfig, run_snake

__version__ = "0.1.0"

__all__ = [
    "Point",
    "Polygon",
    "Region",
    "RegionSet",
    "load_regions",
    "LinearNetwork",
    "build_network",
    "SnakeConfig",
    "run_snake",
    "GridLayout",
    "fit_layout",
    "QualityReport",
    "topsis_select",
    "PipelineConfig",
    "PipelineResult",
    "run_pipeline",
]
