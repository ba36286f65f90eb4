"""Rain and snow particle layers: spawning, temporal advance, compositing."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .fog import StaticWeatherParams, apply_static
from .rasterizer import Camera, rasterize
from .scene import (
    AABB,
    GaussianScene,
    quat_from_axis_angle,
    quat_multiply,
    quat_rotate_between,
    random_quaternion,
    rgb_to_dc,
)


@dataclass(frozen=True)
class ParticleParams:
    """Controls for one rainfall or snowfall effect."""

    kind: str
    count: int
    spawn_bounds: AABB
    size: float = 0.05
    elongation: float = 8.0
    base_color: tuple[float, float, float] = (0.65, 0.66, 0.7)
    opacity: float = 0.4
    velocity: tuple[float, float, float] = (0.0, 0.0, -8.0)
    max_per_layer: int = 256
    t_min: float = 0.0
    t_max: float = 0.6
    t_d: float = 0.85
    t_c: float = 0.1
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("rain", "snow"):
            raise ValueError("kind must be 'rain' or 'snow'")
        if self.count < 0:
            raise ValueError("count must be non-negative")
        if self.max_per_layer < 1:
            raise ValueError("max_per_layer must be at least 1")
        if self.t_min > self.t_max:
            raise ValueError("t_min must not exceed t_max")
        if self.size <= 0.0 or self.elongation < 1.0:
            raise ValueError("need size > 0 and elongation >= 1")
        if not 0.0 <= self.opacity <= 1.0:
            raise ValueError("opacity must lie in [0, 1]")


def rain_preset(spawn_bounds: AABB, count: int = 1200, rng_seed: int = 0, **overrides) -> ParticleParams:
    base = dict(
        kind="rain",
        count=count,
        spawn_bounds=spawn_bounds,
        size=0.12,
        elongation=8.0,
        base_color=(0.65, 0.66, 0.7),
        opacity=0.35,
        velocity=(0.0, 0.0, -9.0),
        t_min=0.0,
        t_max=0.6,
        t_d=0.85,
        t_c=0.1,
        rng_seed=rng_seed,
    )
    base.update(overrides)
    return ParticleParams(**base)


def snow_preset(spawn_bounds: AABB, count: int = 800, rng_seed: int = 0, **overrides) -> ParticleParams:
    base = dict(
        kind="snow",
        count=count,
        spawn_bounds=spawn_bounds,
        size=0.08,
        elongation=4.0,
        base_color=(0.82, 0.83, 0.85),
        opacity=0.5,
        velocity=(0.0, 0.0, -1.2),
        t_min=-0.1,
        t_max=0.6,
        t_d=0.9,
        t_c=0.1,
        rng_seed=rng_seed,
    )
    base.update(overrides)
    return ParticleParams(**base)


@dataclass(frozen=True)
class ParticleLayer:
    """One renderable sublayer of particle Gaussians.

    Positions are always derived as base_means + velocity * elapsed,
    wrapped into the spawn bounds, so world tracks stay exactly linear
    between wraps.
    """

    scene: GaussianScene
    base_means: np.ndarray
    particle_index: np.ndarray
    velocity: np.ndarray
    bounds: AABB
    elapsed: float = 0.0

    def particle_count(self) -> int:
        return int(np.unique(self.particle_index).size)


def _wrap_into(points: np.ndarray, bounds: AABB) -> np.ndarray:
    span = bounds.hi - bounds.lo
    safe = np.where(span > 0.0, span, 1.0)
    wrapped = bounds.lo + np.mod(points - bounds.lo, safe)
    return np.where(span > 0.0, wrapped, points)


def _rain_gaussians(params: ParticleParams, centers: np.ndarray):
    v = np.asarray(params.velocity, dtype=np.float64)
    speed = np.linalg.norm(v)
    if speed == 0.0:
        raise ValueError("rain needs a nonzero velocity to orient drops")
    # long axis on local z, aligned with the fall direction
    q = quat_rotate_between(np.array([0.0, 0.0, 1.0]), v / speed)
    n = centers.shape[0]
    short = params.size / params.elongation
    scales = np.tile([short, short, params.size], (n, 1))
    rotations = np.tile(q, (n, 1))
    return scales, rotations, np.arange(n)


def _snow_gaussians(params: ParticleParams, centers: np.ndarray, rng: np.random.Generator):
    # three coplanar arms per flake, 60 degrees apart, random plane pose
    n = centers.shape[0]
    short = params.size / params.elongation
    arm_scale = np.array([params.size, short, 0.5 * short])
    scales = np.tile(arm_scale, (3 * n, 1))
    rotations = np.empty((3 * n, 4), dtype=np.float64)
    z_axis = np.array([0.0, 0.0, 1.0])
    for i in range(n):
        q_flake = random_quaternion(rng)
        for k in range(3):
            spin = quat_from_axis_angle(z_axis, k * np.pi / 3.0)
            rotations[3 * i + k] = quat_multiply(q_flake, spin)
    index = np.repeat(np.arange(n), 3)
    return scales, rotations, index


def spawn_particles(params: ParticleParams) -> list[ParticleLayer]:
    """Create particle Gaussians and partition them into sublayers.

    Particles land in ceil(count / max_per_layer) disjoint layers whose
    union is complete; rendering them separately keeps depth masking
    from discarding near particles that share pixels with far ones.
    Deterministic under params.rng_seed.
    """
    if params.count == 0:
        return []
    rng = np.random.default_rng(params.rng_seed)
    centers = rng.uniform(
        params.spawn_bounds.lo, params.spawn_bounds.hi, (params.count, 3)
    )
    if params.kind == "rain":
        scales, rotations, particle_of_gaussian = _rain_gaussians(params, centers)
        means = centers
    else:
        scales, rotations, particle_of_gaussian = _snow_gaussians(params, centers, rng)
        means = centers[particle_of_gaussian]

    dc = rgb_to_dc(params.base_color)
    velocity = np.asarray(params.velocity, dtype=np.float64)

    layers: list[ParticleLayer] = []
    for start in range(0, params.count, params.max_per_layer):
        stop = min(start + params.max_per_layer, params.count)
        sel = (particle_of_gaussian >= start) & (particle_of_gaussian < stop)
        m = int(sel.sum())
        sh = np.zeros((m, 1, 3), dtype=np.float64)
        sh[:, 0, :] = dc
        layer_scene = GaussianScene(
            means[sel],
            scales[sel],
            rotations[sel],
            np.full(m, params.opacity),
            sh,
            sh_degree=0,
        )
        layers.append(
            ParticleLayer(
                scene=layer_scene,
                base_means=means[sel].copy(),
                particle_index=particle_of_gaussian[sel].copy(),
                velocity=velocity.copy(),
                bounds=params.spawn_bounds,
            )
        )
    return layers


def advance(layers: Sequence[ParticleLayer], dt: float) -> list[ParticleLayer]:
    """Move every particle by velocity * dt, wrapping across the spawn box.

    Particles leaving through one face re-enter through the opposite one
    with their in-plane offsets preserved (componentwise modular wrap).
    """
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    out = []
    for layer in layers:
        elapsed = layer.elapsed + dt
        means = _wrap_into(
            layer.base_means + layer.velocity[None, :] * elapsed, layer.bounds
        )
        out.append(
            replace(layer, scene=layer.scene.replace(means=means), elapsed=elapsed)
        )
    return out


# ---------------------------------------------------------------------------
# luminance-adaptive compositing
# ---------------------------------------------------------------------------

def luminance_map(rgb: np.ndarray) -> np.ndarray:
    """Per-pixel brightness: channel mean (R + G + B) / 3."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb.mean(axis=-1)


def sky_luminance(luminance: np.ndarray, sky_mask: np.ndarray) -> tuple[float, bool]:
    """Mean brightness over sky pixels.

    Returns (value, used_fallback); with an empty mask the global mean
    is used and flagged.
    """
    luminance = np.asarray(luminance, dtype=np.float64)
    sky_mask = np.asarray(sky_mask, dtype=bool)
    if luminance.shape != sky_mask.shape:
        raise ValueError("luminance and sky_mask dimensions do not match")
    if not sky_mask.any():
        return float(luminance.mean()), True
    return float(luminance[sky_mask].mean()), False


def luminance_factor(
    l_sky: float, luminance: np.ndarray, t_min: float, t_max: float
) -> np.ndarray:
    """Per-pixel particle visibility weight exp(clamp(L_sky - L, t_min, t_max)) - 1.

    Negative t_min dims particles over bright pixels (backlight effect);
    t_max caps how much they can glow over dark ones.
    """
    if t_min > t_max:
        raise ValueError("t_min must not exceed t_max")
    diff = np.clip(l_sky - np.asarray(luminance, dtype=np.float64), t_min, t_max)
    return np.exp(diff) - 1.0


def occlusion_mask(
    noise_depth_ref: np.ndarray,
    scene_depth_ref: np.ndarray,
    t_d: float,
    noise_rgb: np.ndarray,
    t_c: float,
) -> np.ndarray:
    """Pixels where a noise layer is in front of the scene, near, and bright."""
    noise_depth_ref = np.asarray(noise_depth_ref, dtype=np.float64)
    scene_depth_ref = np.asarray(scene_depth_ref, dtype=np.float64)
    noise_rgb = np.asarray(noise_rgb, dtype=np.float64)
    if noise_depth_ref.shape != scene_depth_ref.shape or noise_rgb.shape[:2] != scene_depth_ref.shape:
        raise ValueError("buffer dimensions do not match")
    return (
        (noise_depth_ref < scene_depth_ref)
        & (noise_depth_ref < t_d)
        & (noise_rgb.max(axis=-1) > t_c)
    )


def composite_fall(
    scene_rgb: np.ndarray,
    scene_depth_ref: np.ndarray,
    sky_mask: np.ndarray,
    layers: Sequence[tuple[np.ndarray, np.ndarray]],
    params: ParticleParams,
) -> np.ndarray:
    """Overlay rendered noise sublayers onto the scene frame.

    Each sublayer contributes factor * (noise_rgb masked by its
    occlusion mask); the luminance factor is evaluated per sublayer from
    the shared scene brightness. Output is clamped to [0, 1].
    """
    scene_rgb = np.asarray(scene_rgb, dtype=np.float64)
    lum = luminance_map(scene_rgb)
    out = scene_rgb.copy()
    for noise_rgb, noise_depth_ref in layers:
        l_sky, _ = sky_luminance(lum, sky_mask)
        factor = luminance_factor(l_sky, lum, params.t_min, params.t_max)
        mask = occlusion_mask(noise_depth_ref, scene_depth_ref, params.t_d, noise_rgb, params.t_c)
        out += factor[..., None] * (np.asarray(noise_rgb) * mask[..., None])
    return np.clip(out, 0.0, 1.0)


def render_layers(
    layers: Sequence[ParticleLayer], cam: Camera, d_max: float, threads: int = 1
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Render each sublayer alone on a black background.

    The sublayer depth is rescaled by the accumulated alpha (rendered
    with zero background depth, so the blend holds only particle terms).
    A translucent particle thus reports its true distance instead of an
    opacity-shrunk one, which is what the occlusion comparison needs;
    uncovered pixels read 1.0 and fail every mask conjunct.
    """
    rendered = []
    for layer in layers:
        targets = rasterize(
            layer.scene,
            cam,
            d_max,
            background=(0.0, 0.0, 0.0),
            background_depth=0.0,
            threads=threads,
        )
        covered = targets.alpha > 0.0
        depth_ref = np.ones_like(targets.depth_abs)
        depth_ref[covered] = np.minimum(
            1.0, targets.depth_abs[covered] / targets.alpha[covered] / d_max
        )
        rendered.append((targets.rgb, depth_ref))
    return rendered


def render_fall_frame(
    scene: GaussianScene,
    cam: Camera,
    layers: Sequence[ParticleLayer],
    params: ParticleParams,
    weather: StaticWeatherParams | None = None,
    *,
    d_max: float,
    background=(0.0, 0.0, 0.0),
    threads: int = 1,
) -> np.ndarray:
    """Scene render plus particle sublayers, with optional fog on top."""
    targets = rasterize(scene, cam, d_max, background=background, threads=threads)
    noise = render_layers(layers, cam, d_max, threads=threads)
    rgb = composite_fall(targets.rgb, targets.depth_ref, targets.sky_mask, noise, params)
    if weather is not None:
        rgb = apply_static(rgb, targets.depth_ref, weather)
    return rgb
