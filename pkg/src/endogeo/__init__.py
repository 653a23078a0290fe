"""Geometry-aware depth toolkit.

Losses with analytic gradients, evaluation metrics, signed-distance
sampling over depth-induced surfaces, a procedural lumen renderer, and a
gradient-descent refinement harness, all tied together by a CLI.
"""

__version__ = "0.1.0"

from .core import (
    CameraIntrinsics,
    DepthMap,
    LossBreakdown,
    LossWeights,
    PointCloud,
    RgbImage,
    SdfGridSpec,
    default_intrinsics,
    seeded_rng,
    validate_depth_map,
)
from .geometry import (
    back_project,
    depth_to_cloud,
    image_gradients,
    normals_from_depth,
    project,
    shape_index,
)
from .losses import (
    LossConfig,
    grad_check,
    loss_depth,
    loss_grad,
    loss_normal,
    loss_sdf,
    loss_smooth,
    loss_total,
)
from .metrics import MetricsReport, compute_metrics, median_scale
from .refine import RefineConfig, refine_depth, run_ablation
from .sdf import SpatialIndex, nearest_neighbor, sample_grid, sdf_field, signed_distance
from .synth import (
    CameraPose,
    DatasetConfig,
    LightingModel,
    SceneModel,
    generate_dataset,
    generate_scene,
    pose_facing_wall,
    pose_inside,
    render_frame,
)

__all__ = [
    "__version__",
    "CameraIntrinsics",
    "DepthMap",
    "LossBreakdown",
    "LossWeights",
    "PointCloud",
    "RgbImage",
    "SdfGridSpec",
    "default_intrinsics",
    "seeded_rng",
    "validate_depth_map",
    "back_project",
    "depth_to_cloud",
    "image_gradients",
    "normals_from_depth",
    "project",
    "shape_index",
    "LossConfig",
    "grad_check",
    "loss_depth",
    "loss_grad",
    "loss_normal",
    "loss_sdf",
    "loss_smooth",
    "loss_total",
    "MetricsReport",
    "compute_metrics",
    "median_scale",
    "RefineConfig",
    "refine_depth",
    "run_ablation",
    "SpatialIndex",
    "nearest_neighbor",
    "sample_grid",
    "sdf_field",
    "signed_distance",
    "DatasetConfig",
    "LightingModel",
    "SceneModel",
    "generate_dataset",
    "generate_scene",
    "pose_facing_wall",
    "pose_inside",
    "CameraPose",
    "render_frame",
]
