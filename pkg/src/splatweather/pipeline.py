"""Frame-sequence rendering driven by a job config, plus the run manifest."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from . import __version__
from .config import CameraPathConfig, EffectConfig, JobConfig
from .fog import apply_static
from .imgio import save_png_rgb, save_ppm, save_raw_f32
from .particles import (
    ParticleParams,
    advance,
    composite_fall,
    rain_preset,
    render_layers,
    snow_preset,
    spawn_particles,
)
from .rasterizer import Camera, rasterize
from .scene import AABB, GaussianScene, SkyCoverParams, add_sky_hemisphere, load_scene
from .snowcover import build_snow_cover


@dataclass
class RunManifest:
    """Machine-readable record of one render run; one entry per frame."""

    config: dict
    frames: list[dict] = field(default_factory=list)
    scene_gaussians: int = 0
    snow_gaussians: int = 0
    particle_gaussians: int = 0
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": self.version,
                "config": self.config,
                "gaussians": {
                    "scene": self.scene_gaussians,
                    "snow": self.snow_gaussians,
                    "particles": self.particle_gaussians,
                },
                "frames": self.frames,
            },
            indent=2,
        )


def _keyframe_pose(kf) -> tuple[np.ndarray, np.ndarray]:
    cam = Camera.look_at(2, 2, 1.0, 1.0, 1.0, 1.0, kf.position, kf.look_at, kf.up)
    return cam.rotation, kf.position


def interpolate_camera(camera_path: CameraPathConfig, frame_index: int) -> Camera:
    """Camera for one frame: positions lerp, orientations slerp, intrinsics fixed."""
    if not 0 <= frame_index < camera_path.frames:
        raise ValueError("frame_index out of range")
    kfs = camera_path.keyframes
    if len(kfs) == 1 or camera_path.frames == 1:
        t = 0.0
    else:
        t = frame_index / (camera_path.frames - 1) * (len(kfs) - 1)
    seg = min(int(np.floor(t)), max(len(kfs) - 2, 0))
    u = t - seg

    rot0, pos0 = _keyframe_pose(kfs[seg])
    if u == 0.0 or len(kfs) == 1:
        rot, pos = rot0, pos0
    else:
        rot1, pos1 = _keyframe_pose(kfs[seg + 1])
        pos = (1.0 - u) * pos0 + u * pos1
        slerp = Slerp([0.0, 1.0], Rotation.from_matrix(np.stack([rot0, rot1])))
        rot = slerp(u).as_matrix()

    w2c = np.eye(4)
    w2c[:3, :3] = rot
    w2c[:3, 3] = -rot @ pos
    return Camera(
        camera_path.width,
        camera_path.height,
        camera_path.fx,
        camera_path.fy,
        camera_path.cx,
        camera_path.cy,
        w2c,
        camera_path.near,
        camera_path.far,
    )


def _resolve_sky(
    sky: dict, scene: GaussianScene, camera_centers: np.ndarray
) -> SkyCoverParams:
    params = dict(sky)
    if "center" not in params:
        params["center"] = scene.bounds.center
    if "radius" not in params:
        center = np.asarray(params["center"])
        dists = np.linalg.norm(scene.means - center, axis=1)
        extent = float(dists.max()) if len(scene) else 1.0
        # the dome must also enclose every camera with margin, or its
        # near wall ends up in front of the lens
        cam_extent = float(np.linalg.norm(camera_centers - center, axis=1).max())
        params["radius"] = 2.0 * max(extent, cam_extent, 1e-6)
    return SkyCoverParams(**params)


def _resolve_particles(
    effect: EffectConfig, geometry_bounds: AABB, job_seed: int
) -> ParticleParams:
    overrides = dict(effect.params)
    overrides.pop("kind")
    preset = rain_preset if effect.kind == "rainfall" else snow_preset
    if "spawn_bounds" not in overrides:
        # fill the geometry's volume, not the (much larger) sky dome's
        pad = 0.05 * max(geometry_bounds.diagonal, 1e-6)
        overrides["spawn_bounds"] = AABB(
            geometry_bounds.lo - pad, geometry_bounds.hi + pad
        )
    overrides.setdefault("rng_seed", job_seed)
    return preset(**overrides)


def _frame_name(index: int, image_format: str) -> str:
    ext = {"png": "png", "ppm": "ppm", "raw-float": "raw"}[image_format]
    return f"frame_{index:06d}.{ext}"


def _write_frame(path: Path, rgb: np.ndarray, image_format: str) -> None:
    if image_format == "png":
        save_png_rgb(path, rgb)
    elif image_format == "ppm":
        save_ppm(path, rgb)
    else:
        save_raw_f32(path, rgb)


def run_job(cfg: JobConfig) -> RunManifest:
    """Render the configured frame sequence and write images plus manifest.

    The scene is built once (snow cover, then sky dome); particle layers
    spawn once and advance by 1/fps before each frame. Per-frame effects
    apply in their declared stack order. Identical config and seed give
    byte-identical outputs.
    """
    scene = load_scene(cfg.scene_path, cfg.sh_degree)
    scene_count = len(scene)

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    probe = out_dir / ".write_probe"
    try:
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory not writable: {out_dir}: {exc}") from exc

    # scene edits happen once, before any frame
    for effect in cfg.weather:
        if effect.kind == "snow_cover":
            scene = build_snow_cover(scene, effect.params)
    snow_count = len(scene) - scene_count
    geometry_bounds = scene.bounds
    d_max = cfg.d_max
    if d_max is None:
        d_max = max(geometry_bounds.diagonal, 1e-6)
    if cfg.sky is not None:
        centers = np.stack(
            [interpolate_camera(cfg.camera, i).center for i in range(cfg.camera.frames)]
        )
        scene = add_sky_hemisphere(scene, _resolve_sky(cfg.sky, scene, centers), cfg.rng_seed)

    particle_effects = []  # (effect, params, layers), advanced in place each frame
    particle_count = 0
    for effect in cfg.weather:
        if effect.kind in ("rainfall", "snowfall"):
            params = _resolve_particles(effect, geometry_bounds, cfg.rng_seed)
            layers = spawn_particles(params)
            particle_effects.append([effect, params, layers])
            particle_count += sum(len(layer.scene) for layer in layers)

    manifest = RunManifest(
        config=_echo_config(cfg, d_max),
        scene_gaussians=scene_count,
        snow_gaussians=snow_count,
        particle_gaussians=particle_count,
    )

    dt = 1.0 / cfg.camera.fps
    for frame_index in range(cfg.camera.frames):
        started = time.perf_counter()
        cam = interpolate_camera(cfg.camera, frame_index)
        for entry in particle_effects:
            entry[2] = advance(entry[2], dt)

        targets = rasterize(
            scene, cam, d_max, background=cfg.background, threads=cfg.thread_count
        )
        rgb = targets.rgb
        dynamic_index = 0
        for effect in cfg.weather:
            if effect.kind == "static":
                rgb = apply_static(rgb, targets.depth_ref, effect.params)
            elif effect.kind in ("rainfall", "snowfall"):
                _, params, layers = particle_effects[dynamic_index]
                dynamic_index += 1
                noise = render_layers(layers, cam, d_max, threads=cfg.thread_count)
                rgb = composite_fall(
                    rgb, targets.depth_ref, targets.sky_mask, noise, params
                )

        name = _frame_name(frame_index, cfg.image_format)
        _write_frame(out_dir / name, rgb, cfg.image_format)
        manifest.frames.append(
            {
                "index": frame_index,
                "file": name,
                "wall_ms": round((time.perf_counter() - started) * 1000.0, 3),
            }
        )

    (out_dir / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    return manifest


def _echo_config(cfg: JobConfig, d_max: float) -> dict:
    def plain(value):
        if isinstance(value, Path):
            return str(value)
        if isinstance(value, np.ndarray):
            return value.tolist()
        if isinstance(value, AABB):
            return {"lo": value.lo.tolist(), "hi": value.hi.tolist()}
        if isinstance(value, (list, tuple)):
            return [plain(v) for v in value]
        if isinstance(value, dict):
            return {k: plain(v) for k, v in value.items()}
        if hasattr(value, "__dataclass_fields__"):
            return {
                name: plain(getattr(value, name))
                for name in value.__dataclass_fields__
            }
        return value

    echo = plain(cfg)
    echo["d_max"] = d_max
    return echo
