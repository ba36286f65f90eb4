"""Declarative render-job configs: YAML parsing with strict validation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .fog import STATIC_PRESETS, StaticWeatherParams
from .particles import rain_preset, snow_preset
from .scene import AABB
from .snowcover import SnowCoverParams

IMAGE_FORMATS = ("png", "ppm", "raw-float")


class ConfigError(ValueError):
    """Invalid job config; message carries the offending key path."""


@dataclass(frozen=True)
class Keyframe:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray


@dataclass(frozen=True)
class CameraPathConfig:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    near: float
    far: float
    frames: int
    fps: float
    keyframes: tuple[Keyframe, ...]


@dataclass(frozen=True)
class EffectConfig:
    kind: str  # static | rainfall | snowfall | snow_cover
    params: object


@dataclass(frozen=True)
class JobConfig:
    scene_path: Path
    camera: CameraPathConfig
    sh_degree: int = 0
    d_max: float | None = None
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    sky: dict | None = None
    weather: tuple[EffectConfig, ...] = ()
    output_dir: Path = Path("out")
    image_format: str = "png"
    rng_seed: int = 0
    thread_count: int = 1


# ---------------------------------------------------------------------------
# validation helpers
# ---------------------------------------------------------------------------

def _fail(path: str, message: str):
    raise ConfigError(f"{path}: {message}")


def _expect_mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        _fail(path, f"expected a mapping, got {type(value).__name__}")
    return value


def _check_keys(mapping: dict, allowed: set[str], path: str) -> None:
    for key in mapping:
        if key not in allowed:
            _fail(path, f"unknown key '{key}'")


def _get_number(mapping: dict, key: str, path: str, default=None, minimum=None, strict_min=False):
    if key not in mapping:
        if default is None:
            _fail(path, f"missing required key '{key}'")
        return default
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(f"{path}.{key}", f"expected a number, got {type(value).__name__}")
    value = float(value)
    if minimum is not None:
        if strict_min and value <= minimum:
            _fail(f"{path}.{key}", f"must be > {minimum}")
        if not strict_min and value < minimum:
            _fail(f"{path}.{key}", f"must be >= {minimum}")
    return value


def _get_int(mapping: dict, key: str, path: str, default=None, minimum=None):
    if key not in mapping:
        if default is None:
            _fail(path, f"missing required key '{key}'")
        return default
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(f"{path}.{key}", f"expected an integer, got {type(value).__name__}")
    if minimum is not None and value < minimum:
        _fail(f"{path}.{key}", f"must be >= {minimum}")
    return value


def _get_vec3(mapping: dict, key: str, path: str, default=None):
    if key not in mapping:
        if default is None:
            _fail(path, f"missing required key '{key}'")
        return default
    value = mapping[key]
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 3
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
    ):
        _fail(f"{path}.{key}", "expected a list of three numbers")
    return tuple(float(v) for v in value)


def _get_str(mapping: dict, key: str, path: str, default=None, choices=None):
    if key not in mapping:
        if default is None:
            _fail(path, f"missing required key '{key}'")
        return default
    value = mapping[key]
    if not isinstance(value, str):
        _fail(f"{path}.{key}", f"expected a string, got {type(value).__name__}")
    if choices is not None and value not in choices:
        _fail(f"{path}.{key}", f"must be one of {sorted(choices)}")
    return value


# ---------------------------------------------------------------------------
# section parsers
# ---------------------------------------------------------------------------

def _parse_camera(section, path: str) -> CameraPathConfig:
    section = _expect_mapping(section, path)
    allowed = {
        "width", "height", "fx", "fy", "cx", "cy", "near", "far",
        "frames", "fps", "keyframes",
    }
    _check_keys(section, allowed, path)
    width = _get_int(section, "width", path, minimum=1)
    height = _get_int(section, "height", path, minimum=1)
    fx = _get_number(section, "fx", path, minimum=0.0, strict_min=True)
    fy = _get_number(section, "fy", path, minimum=0.0, strict_min=True)
    cx = _get_number(section, "cx", path, default=width / 2.0)
    cy = _get_number(section, "cy", path, default=height / 2.0)
    near = _get_number(section, "near", path, default=0.01, minimum=0.0, strict_min=True)
    far = _get_number(section, "far", path, default=1e6)
    if far <= near:
        _fail(f"{path}.far", "must exceed near")
    frames = _get_int(section, "frames", path, default=1, minimum=1)
    fps = _get_number(section, "fps", path, default=24.0, minimum=0.0, strict_min=True)

    if "keyframes" not in section:
        _fail(path, "missing required key 'keyframes'")
    raw_frames = section["keyframes"]
    if not isinstance(raw_frames, list) or not raw_frames:
        _fail(f"{path}.keyframes", "expected a nonempty list")
    keyframes = []
    for i, kf in enumerate(raw_frames):
        kf_path = f"{path}.keyframes[{i}]"
        kf = _expect_mapping(kf, kf_path)
        _check_keys(kf, {"position", "look_at", "up"}, kf_path)
        position = np.array(_get_vec3(kf, "position", kf_path))
        look_at = np.array(_get_vec3(kf, "look_at", kf_path))
        up = np.array(_get_vec3(kf, "up", kf_path, default=(0.0, 0.0, 1.0)))
        if np.allclose(position, look_at):
            _fail(kf_path, "position and look_at coincide")
        keyframes.append(Keyframe(position, look_at, up))
    return CameraPathConfig(
        width, height, fx, fy, cx, cy, near, far, frames, fps, tuple(keyframes)
    )


def _parse_sky(section, path: str) -> dict:
    section = _expect_mapping(section, path)
    allowed = {"center", "radius", "point_count", "color", "opacity"}
    _check_keys(section, allowed, path)
    sky = {}
    if "center" in section:
        sky["center"] = _get_vec3(section, "center", path)
    if "radius" in section:
        sky["radius"] = _get_number(section, "radius", path, minimum=0.0, strict_min=True)
    sky["point_count"] = _get_int(section, "point_count", path, default=2000, minimum=0)
    if "color" in section:
        sky["color"] = _get_vec3(section, "color", path)
    if "opacity" in section:
        sky["opacity"] = _get_number(section, "opacity", path, minimum=0.0)
    return sky


def _parse_static(block: dict, path: str) -> StaticWeatherParams:
    allowed = {"kind", "preset", "fog_color", "intensity"}
    _check_keys(block, allowed, path)
    preset_name = _get_str(block, "preset", path, default="fog", choices=set(STATIC_PRESETS))
    preset = STATIC_PRESETS[preset_name]
    color = _get_vec3(block, "fog_color", path, default=preset.fog_color)
    intensity = _get_number(block, "intensity", path, default=preset.intensity, minimum=0.0)
    try:
        return StaticWeatherParams(fog_color=color, intensity=intensity)
    except ValueError as exc:
        _fail(path, str(exc))


def _parse_particles(block: dict, path: str, kind: str) -> dict:
    allowed = {
        "kind", "count", "spawn_bounds", "size", "elongation", "base_color",
        "opacity", "velocity", "max_per_layer", "t_min", "t_max", "t_d", "t_c", "seed",
    }
    _check_keys(block, allowed, path)
    overrides: dict = {"kind": "rain" if kind == "rainfall" else "snow"}
    if "count" in block:
        overrides["count"] = _get_int(block, "count", path, minimum=0)
    if "spawn_bounds" in block:
        sb = _expect_mapping(block["spawn_bounds"], f"{path}.spawn_bounds")
        _check_keys(sb, {"lo", "hi"}, f"{path}.spawn_bounds")
        lo = _get_vec3(sb, "lo", f"{path}.spawn_bounds")
        hi = _get_vec3(sb, "hi", f"{path}.spawn_bounds")
        try:
            overrides["spawn_bounds"] = AABB(np.array(lo), np.array(hi))
        except ValueError as exc:
            _fail(f"{path}.spawn_bounds", str(exc))
    for key in ("size", "elongation", "opacity", "t_min", "t_max", "t_d", "t_c"):
        if key in block:
            overrides[key] = _get_number(block, key, path)
    if overrides.get("t_min") is not None and overrides.get("t_max") is not None:
        if overrides["t_min"] > overrides["t_max"]:
            _fail(path, "keys 't_min' and 't_max' violate t_min <= t_max")
    if "velocity" in block:
        overrides["velocity"] = _get_vec3(block, "velocity", path)
    if "max_per_layer" in block:
        overrides["max_per_layer"] = _get_int(block, "max_per_layer", path, minimum=1)
    if "seed" in block:
        overrides["rng_seed"] = _get_int(block, "seed", path)

    # probe the full parameter set now so constraint violations surface at
    # parse time even when spawn_bounds is resolved later from the scene
    preset = rain_preset if kind == "rainfall" else snow_preset
    probe = dict(overrides)
    probe.pop("kind")
    probe.setdefault("spawn_bounds", AABB(np.zeros(3), np.ones(3)))
    try:
        preset(**probe)
    except ValueError as exc:
        _fail(path, str(exc))
    return overrides


def _parse_snow_cover(block: dict, path: str) -> SnowCoverParams:
    allowed = {
        "kind", "gravity", "seed_dot_min", "plane_angle_max", "k_neighbors",
        "fill_density", "snow_scale", "snow_opacity", "snow_color",
        "outlier_k", "outlier_factor", "seed",
    }
    _check_keys(block, allowed, path)
    kwargs = {}
    if "gravity" in block:
        kwargs["gravity"] = _get_vec3(block, "gravity", path)
    for key in ("seed_dot_min", "plane_angle_max", "fill_density", "snow_scale",
                "snow_opacity", "outlier_factor"):
        if key in block:
            kwargs[key] = _get_number(block, key, path)
    for key in ("k_neighbors", "outlier_k"):
        if key in block:
            kwargs[key] = _get_int(block, key, path)
    if "snow_color" in block:
        kwargs["snow_color"] = _get_vec3(block, "snow_color", path)
    if "seed" in block:
        kwargs["rng_seed"] = _get_int(block, "seed", path)
    try:
        return SnowCoverParams(**kwargs)
    except ValueError as exc:
        _fail(path, str(exc))


def _parse_weather(section, path: str) -> tuple[EffectConfig, ...]:
    if not isinstance(section, list):
        _fail(path, "expected a list of effect blocks")
    effects = []
    for i, block in enumerate(section):
        block_path = f"{path}[{i}]"
        block = _expect_mapping(block, block_path)
        kind = _get_str(
            block, "kind", block_path,
            choices={"static", "rainfall", "snowfall", "snow_cover"},
        )
        if kind == "static":
            effects.append(EffectConfig("static", _parse_static(block, block_path)))
        elif kind in ("rainfall", "snowfall"):
            effects.append(EffectConfig(kind, _parse_particles(block, block_path, kind)))
        else:
            effects.append(EffectConfig("snow_cover", _parse_snow_cover(block, block_path)))
    return tuple(effects)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_TOP_KEYS = {
    "scene", "sh_degree", "d_max", "background", "camera", "sky", "weather",
    "output_dir", "image_format", "seed", "threads",
}


def parse_config(path: str | Path) -> JobConfig:
    """Load and validate a YAML job config; unknown keys are rejected.

    Key paths identify semantic errors; YAML syntax errors keep the
    parser's line/column report.
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = yaml.safe_load(handle)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    raw = _expect_mapping(raw, "<root>")
    _check_keys(raw, _TOP_KEYS, "<root>")

    scene_path = Path(_get_str(raw, "scene", "<root>"))
    camera = _parse_camera(raw.get("camera"), "camera") if "camera" in raw else _fail(
        "<root>", "missing required key 'camera'"
    )
    sh_degree = _get_int(raw, "sh_degree", "<root>", default=0, minimum=0)
    if sh_degree > 3:
        _fail("sh_degree", "must be at most 3")
    d_max = None
    if "d_max" in raw:
        d_max = _get_number(raw, "d_max", "<root>", minimum=0.0, strict_min=True)
    background = _get_vec3(raw, "background", "<root>", default=(0.0, 0.0, 0.0))
    sky = _parse_sky(raw["sky"], "sky") if "sky" in raw else None
    weather = _parse_weather(raw["weather"], "weather") if "weather" in raw else ()
    output_dir = Path(_get_str(raw, "output_dir", "<root>", default="out"))
    image_format = _get_str(
        raw, "image_format", "<root>", default="png", choices=set(IMAGE_FORMATS)
    )
    rng_seed = _get_int(raw, "seed", "<root>", default=0)
    thread_count = _get_int(raw, "threads", "<root>", default=1, minimum=1)

    return JobConfig(
        scene_path=scene_path,
        camera=camera,
        sh_degree=sh_degree,
        d_max=d_max,
        background=background,
        sky=sky,
        weather=weather,
        output_dir=output_dir,
        image_format=image_format,
        rng_seed=rng_seed,
        thread_count=thread_count,
    )
