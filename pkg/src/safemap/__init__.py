"""Safety-aware scalar field mapping.

A library and CLI simulator that maps an unknown scalar field with a
Gaussian-process model while detecting and avoiding high-intensity
(unsafe) super-level-set regions.  Unsafe regions are extracted from a
confidence-bound binary map as circles (2D Hough transform) or bounding
spheres of connected voxel components (3D), planned measurement points
falling inside them are relocated to the nearest estimated-safe grid
point, and the robot travels between measurement points on RRT* paths
that treat the detected balls as obstacles.
"""

from .fields import FieldSpec, MeasurementModel, SafetyThreshold, eval_field, measure, true_safety
from .gp import KernelParams, Dataset, Posterior, GpModel, kernel, posterior, mutual_information, posterior_covariance_matrix
from .grids import TestGrid, make_grid, grid_geometry, project
from .safety import ConfidenceSchedule, BinarySafetyMap, beta, binary_map, safe_subset
from .planning import MeasurementPlan, mvs_select, greedy_info_gain, nn_order
from .detection import HoughParams, DetectedRegionSet, detect_2d, detect_3d
from .rrt import PlannerParams, Path, plan, path_length
from .episode import EpisodeResult, run_episode, relocate
from .analysis import InfoReport, ConvergenceReport, info_gain_eigen, info_loss, convergence_audit
from .config import ExperimentConfig, load_config, preset

__all__ = [
    "FieldSpec", "MeasurementModel", "SafetyThreshold", "eval_field", "measure", "true_safety",
    "KernelParams", "Dataset", "Posterior", "GpModel", "kernel", "posterior",
    "mutual_information", "posterior_covariance_matrix",
    "TestGrid", "make_grid", "grid_geometry", "project",
    "ConfidenceSchedule", "BinarySafetyMap", "beta", "binary_map", "safe_subset",
    "MeasurementPlan", "mvs_select", "greedy_info_gain", "nn_order",
    "HoughParams", "DetectedRegionSet", "detect_2d", "detect_3d",
    "PlannerParams", "Path", "plan", "path_length",
    "EpisodeResult", "run_episode", "relocate",
    "InfoReport", "ConvergenceReport", "info_gain_eigen", "info_loss", "convergence_audit",
    "ExperimentConfig", "load_config", "preset",
]
