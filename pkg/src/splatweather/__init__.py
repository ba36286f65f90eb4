"""Gaussian splat rendering with controllable 4D weather effects."""

__version__ = "0.1.0"

from .scene import (
    AABB,
    Gaussian,
    GaussianScene,
    SceneDataError,
    SceneFormatError,
    SkyCoverParams,
    add_sky_hemisphere,
    covariance_3d,
    eval_sh_color,
    load_scene,
    save_scene,
    shortest_axis_normal,
)
from .rasterizer import (
    Camera,
    Projected2D,
    RenderTargets,
    brute_force_pixel,
    normalize_depth,
    project_gaussian,
    rasterize,
)
from .losses import (
    GeometryLossConfig,
    ReferenceDepthMap,
    RefinementDiverged,
    loss_depth,
    loss_hard_soft,
    loss_normal,
    loss_total,
    normalize_global,
    normalize_local,
    pseudo_normals_from_depth,
    refine_toy,
    ssim,
)
from .fog import STATIC_PRESETS, StaticWeatherParams, apply_static, fog_alpha
from .particles import (
    ParticleLayer,
    ParticleParams,
    advance,
    composite_fall,
    luminance_factor,
    luminance_map,
    occlusion_mask,
    rain_preset,
    render_fall_frame,
    sky_luminance,
    snow_preset,
    spawn_particles,
)
from .snowcover import (
    SnowCoverParams,
    SnowSeed,
    build_snow_cover,
    densify_plane,
    filter_outliers,
    init_snow_seeds,
    plane_radius,
    snowify,
)
from .config import ConfigError, JobConfig, parse_config
from .pipeline import RunManifest, interpolate_camera, run_job

__all__ = [
    "AABB",
    "Camera",
    "ConfigError",
    "Gaussian",
    "GaussianScene",
    "GeometryLossConfig",
    "JobConfig",
    "ParticleLayer",
    "ParticleParams",
    "Projected2D",
    "ReferenceDepthMap",
    "RefinementDiverged",
    "RenderTargets",
    "RunManifest",
    "STATIC_PRESETS",
    "SceneDataError",
    "SceneFormatError",
    "SkyCoverParams",
    "SnowCoverParams",
    "SnowSeed",
    "StaticWeatherParams",
    "add_sky_hemisphere",
    "advance",
    "apply_static",
    "brute_force_pixel",
    "build_snow_cover",
    "composite_fall",
    "covariance_3d",
    "densify_plane",
    "eval_sh_color",
    "filter_outliers",
    "fog_alpha",
    "init_snow_seeds",
    "interpolate_camera",
    "load_scene",
    "loss_depth",
    "loss_hard_soft",
    "loss_normal",
    "loss_total",
    "luminance_factor",
    "luminance_map",
    "normalize_depth",
    "normalize_global",
    "normalize_local",
    "occlusion_mask",
    "parse_config",
    "plane_radius",
    "project_gaussian",
    "pseudo_normals_from_depth",
    "rain_preset",
    "rasterize",
    "refine_toy",
    "render_fall_frame",
    "run_job",
    "save_scene",
    "shortest_axis_normal",
    "sky_luminance",
    "snow_preset",
    "snowify",
    "spawn_particles",
    "ssim",
]
