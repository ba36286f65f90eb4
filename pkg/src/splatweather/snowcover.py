"""Snow accumulation: seed upward surfaces, densify local planes, filter, emit."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .scene import (
    GaussianScene,
    quat_rotate_between,
    rgb_to_dc,
    scene_shortest_axis_normals,
)


@dataclass(frozen=True)
class SnowCoverParams:
    gravity: tuple[float, float, float] = (0.0, 0.0, -1.0)
    seed_dot_min: float = math.cos(math.pi / 4.0)
    plane_angle_max: float = math.pi / 6.0
    k_neighbors: int = 8
    fill_density: float = 50.0
    snow_scale: float = 0.03
    snow_opacity: float = 0.95
    snow_color: tuple[float, float, float] = (0.92, 0.93, 0.95)
    outlier_k: int = 6
    outlier_factor: float = 2.0
    rng_seed: int = 0

    def __post_init__(self):
        g = np.asarray(self.gravity, dtype=np.float64)
        norm = np.linalg.norm(g)
        if norm == 0.0:
            raise ValueError("gravity must be a nonzero vector")
        object.__setattr__(self, "gravity", tuple(g / norm))
        if not 0.0 < self.seed_dot_min <= 1.0:
            raise ValueError("seed_dot_min must lie in (0, 1]")
        if not 0.0 < self.plane_angle_max < math.pi / 2.0:
            raise ValueError("plane_angle_max must lie in (0, pi/2)")
        if self.k_neighbors < 3:
            raise ValueError("k_neighbors must be at least 3")
        if self.fill_density < 0.0 or self.snow_scale <= 0.0:
            raise ValueError("need fill_density >= 0 and snow_scale > 0")
        if not 0.0 <= self.snow_opacity <= 1.0:
            raise ValueError("snow_opacity must lie in [0, 1]")


@dataclass(frozen=True)
class SnowSeed:
    """An anchor for densification: position, surface normal, neighbor spacing."""

    position: np.ndarray
    normal: np.ndarray
    neighbor_distances: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=np.float64))
        object.__setattr__(
            self, "neighbor_distances", np.asarray(self.neighbor_distances, dtype=np.float64)
        )


def init_snow_seeds(scene: GaussianScene, params: SnowCoverParams) -> list[SnowSeed]:
    """Pick non-sky Gaussians whose shortest-axis normal points upward.

    Upward means the normal's dot product with the negative gravity
    vector reaches seed_dot_min (normals are sign-flipped toward up
    first). Each seed records distances to its k nearest fellow seeds.
    """
    if len(scene) == 0:
        raise ValueError("scene is empty")
    up = -np.asarray(params.gravity, dtype=np.float64)
    normals = scene_shortest_axis_normals(scene)
    dots = normals @ up
    normals = np.where(dots[:, None] < 0.0, -normals, normals)
    dots = np.abs(dots)
    chosen = np.flatnonzero(~scene.sky_flags & (dots >= params.seed_dot_min))
    if chosen.size == 0:
        return []

    positions = scene.means[chosen]
    k = min(params.k_neighbors, chosen.size - 1)
    if k >= 1:
        tree = cKDTree(positions)
        dists, _ = tree.query(positions, k=k + 1)
        neighbor_dists = dists[:, 1:]
    else:
        neighbor_dists = np.zeros((chosen.size, 0))
    return [
        SnowSeed(positions[i], normals[chosen[i]], neighbor_dists[i])
        for i in range(chosen.size)
    ]


def plane_radius(neighbor_distances) -> float:
    """Robust local fill radius: median spacing shrunk by its dispersion.

    Uses the population standard deviation; equals the median exactly
    when all distances agree.
    """
    distances = np.asarray(neighbor_distances, dtype=np.float64)
    if distances.size == 0:
        raise ValueError("neighbor_distances must be nonempty")
    return float(np.median(distances) / (1.0 + 2.0 * distances.std()))


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0])
    if abs(normal[0]) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(normal, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    return e1, e2


def _seed_rng(seed: SnowSeed, params: SnowCoverParams) -> np.random.Generator:
    # per-seed stream keyed on the position so neighbouring disks differ
    entropy = np.frombuffer(seed.position.astype("<f8").tobytes(), dtype="<u8")
    return np.random.default_rng(np.random.SeedSequence([params.rng_seed, *entropy.tolist()]))


def densify_plane(seed: SnowSeed, params: SnowCoverParams) -> np.ndarray:
    """Uniform points on the local tangent disk around one seed.

    Empty when the surface tilts at least plane_angle_max away from
    horizontal; otherwise ceil(fill_density * pi * r^2) points on the
    disk of radius r = plane_radius(seed). Deterministic per seed.
    """
    up = -np.asarray(params.gravity, dtype=np.float64)
    cos_tilt = float(np.clip(np.dot(seed.normal, up), -1.0, 1.0))
    if math.acos(cos_tilt) >= params.plane_angle_max:
        return np.zeros((0, 3))
    if seed.neighbor_distances.size == 0:
        return np.zeros((0, 3))
    r = plane_radius(seed.neighbor_distances)
    n_points = math.ceil(params.fill_density * math.pi * r * r)
    if n_points == 0:
        return np.zeros((0, 3))
    rng = _seed_rng(seed, params)
    radii = r * np.sqrt(rng.uniform(0.0, 1.0, n_points))
    angles = rng.uniform(0.0, 2.0 * np.pi, n_points)
    e1, e2 = _plane_basis(seed.normal)
    offsets = radii[:, None] * (
        np.cos(angles)[:, None] * e1[None, :] + np.sin(angles)[:, None] * e2[None, :]
    )
    return seed.position[None, :] + offsets


def _outlier_keep_mask(points: np.ndarray, outlier_k: int, outlier_factor: float) -> np.ndarray:
    n = points.shape[0]
    if n < outlier_k + 1:
        return np.ones(n, dtype=bool)
    tree = cKDTree(points)
    dists, _ = tree.query(points, k=outlier_k + 1)
    stat = dists[:, 1:].mean(axis=1)
    threshold = stat.mean() + outlier_factor * stat.std()
    return stat <= threshold


def filter_outliers(points, outlier_k: int, outlier_factor: float) -> np.ndarray:
    """Drop points whose mean k-NN distance exceeds mean + factor * std.

    Fewer than outlier_k + 1 points are returned unchanged.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return points[_outlier_keep_mask(points, outlier_k, outlier_factor)]


def snowify(points, params: SnowCoverParams, normals=None) -> GaussianScene:
    """Flattened high-opacity snow Gaussians, one per point.

    The short axis (a quarter of snow_scale) is aligned with the local
    plane normal, and each flake is lifted one short-axis sigma along it
    so the snow covers the host surface instead of depth-tying with it.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = points.shape[0]
    if normals is None:
        normals = np.tile([0.0, 0.0, 1.0], (n, 1))
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    thickness = params.snow_scale / 4.0
    centers = points + thickness * normals
    scales = np.tile([params.snow_scale, params.snow_scale, thickness], (n, 1))
    z_axis = np.array([0.0, 0.0, 1.0])
    rotations = np.empty((n, 4), dtype=np.float64)
    for i in range(n):
        rotations[i] = quat_rotate_between(z_axis, normals[i])
    sh = np.zeros((n, 1, 3), dtype=np.float64)
    sh[:, 0, :] = rgb_to_dc(params.snow_color)
    return GaussianScene(
        centers, scales, rotations, np.full(n, params.snow_opacity), sh, sh_degree=0
    )


def build_snow_cover(scene: GaussianScene, params: SnowCoverParams) -> GaussianScene:
    """Seed, densify, filter and append snow; the input Gaussians are untouched."""
    seeds = init_snow_seeds(scene, params)
    if not seeds:
        return scene
    point_chunks = []
    normal_chunks = []
    for seed in seeds:
        pts = densify_plane(seed, params)
        if pts.shape[0]:
            point_chunks.append(pts)
            normal_chunks.append(np.tile(seed.normal, (pts.shape[0], 1)))
    if not point_chunks:
        return scene
    points = np.concatenate(point_chunks)
    normals = np.concatenate(normal_chunks)
    keep = _outlier_keep_mask(points, params.outlier_k, params.outlier_factor)
    snow = snowify(points[keep], params, normals[keep])
    if len(snow) == 0:
        return scene
    k = scene.sh_coeffs.shape[1]
    sh = np.zeros((len(snow), k, 3), dtype=np.float64)
    sh[:, 0, :] = snow.sh_coeffs[:, 0, :]
    return scene.appended(
        snow.means,
        snow.scales,
        snow.rotations,
        snow.opacities,
        sh,
        np.zeros(len(snow), dtype=bool),
    )
