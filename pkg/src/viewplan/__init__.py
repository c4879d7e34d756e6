"""One-shot view planning workbench for active object reconstruction."""

from viewplan.geometry import Mesh, PointCloud, Pose, load_mesh, normalize_mesh, sample_surface
from viewplan.occupancy import OccupancyGrid, build_grid, cast_ray, visible_points
from viewplan.viewspace import View, ViewSpace, build_viewspace, movement_cost
from viewplan.sensor import SensorConfig, accumulate, capture
from viewplan.refinement import Refiner, refine
from viewplan.covering import CoverInstance, CoverSolution, build_instance, solve_exact, solve_greedy
from viewplan.pathing import Tour, plan_tour, plan_tour_greedy
from viewplan.predictor import FeatureTensor, TrainReport, ViewSetPredictor, featurize, sc_loss
from viewplan.metrics import EvalReport, chamfer, dcd, emd, surface_coverage
from viewplan.config import Config

__version__ = "0.1.0"

__all__ = [
    "Mesh", "PointCloud", "Pose", "load_mesh", "normalize_mesh", "sample_surface",
    "OccupancyGrid", "build_grid", "cast_ray", "visible_points",
    "View", "ViewSpace", "build_viewspace", "movement_cost",
    "SensorConfig", "capture", "accumulate",
    "Refiner", "refine",
    "CoverInstance", "CoverSolution", "build_instance", "solve_exact", "solve_greedy",
    "Tour", "plan_tour", "plan_tour_greedy",
    "FeatureTensor", "TrainReport", "ViewSetPredictor", "featurize", "sc_loss",
    "EvalReport", "chamfer", "dcd", "emd", "surface_coverage",
    "Config",
]
