"""Ground-plane depth priors, depth-ranking descriptions, and depth evaluation."""

__version__ = "0.1.0"

from .camera import (
    CameraRig,
    DepthMode,
    Extrinsics,
    GroundPoint,
    Intrinsics,
    ProjectionMatrix,
    backproject_ground_pixel,
    ground_range,
    parse_camera_config,
    projection_matrix,
    solve_world_on_plane,
    surface_depth,
)
from .depthmap import DepthMap, decode_f32, decode_png16, encode_f32, encode_png16
from .language import CombinedText, ObjectDepth, combine_text, object_depths, render_description
from .metrics import (
    ErrorDistribution,
    LatentParams,
    MetricsReport,
    depth_metrics,
    error_distribution,
    garg_crop,
    kl_loss,
    reparameterize,
    silog_loss,
)
from .scene import (
    DepthBundle,
    PipelineOptions,
    compose_scene,
    extend_vertical,
    ground_depth,
    road_depth,
    run_pipeline,
)
from .segmentation import (
    Category,
    ClassTable,
    DEFAULT_CLASS_TABLE,
    InstanceMap,
    Mask,
    SegmentationMap,
    connected_components,
    load_labels,
    mask_for,
    parse_class_table,
)
from .synthetic import BoxSpec, SyntheticScene, fixture, gen_box_scene, gen_flat_scene, perturb_mask
from .telea import inpaint_telea

__all__ = [
    "BoxSpec",
    "CameraRig",
    "Category",
    "ClassTable",
    "CombinedText",
    "DEFAULT_CLASS_TABLE",
    "DepthBundle",
    "DepthMap",
    "DepthMode",
    "ErrorDistribution",
    "Extrinsics",
    "GroundPoint",
    "InstanceMap",
    "Intrinsics",
    "LatentParams",
    "Mask",
    "MetricsReport",
    "ObjectDepth",
    "PipelineOptions",
    "ProjectionMatrix",
    "SegmentationMap",
    "SyntheticScene",
    "backproject_ground_pixel",
    "combine_text",
    "compose_scene",
    "connected_components",
    "decode_f32",
    "decode_png16",
    "depth_metrics",
    "encode_f32",
    "encode_png16",
    "error_distribution",
    "extend_vertical",
    "fixture",
    "garg_crop",
    "gen_box_scene",
    "gen_flat_scene",
    "ground_depth",
    "ground_range",
    "inpaint_telea",
    "kl_loss",
    "load_labels",
    "mask_for",
    "object_depths",
    "parse_camera_config",
    "parse_class_table",
    "perturb_mask",
    "projection_matrix",
    "render_description",
    "reparameterize",
    "road_depth",
    "run_pipeline",
    "silog_loss",
    "solve_world_on_plane",
    "surface_depth",
]
