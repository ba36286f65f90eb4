"""Tile-based CPU splat rasterizer with a brute-force per-pixel oracle."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .scene import (
    Gaussian,
    GaussianScene,
    eval_sh_colors,
    quat_to_matrix,
    scene_shortest_axis_normals,
    shortest_axis_normal,
)

TILE = 16
COV2D_DILATION = 0.3            # px^2 added to the projected covariance diagonal
ALPHA_MAX = 0.99
ALPHA_SKIP = 1.0 / 255.0
TERMINATION_DEFAULT = 1e-4
# Beyond this Mahalanobis radius every splat falls under ALPHA_SKIP, so
# footprint binning with it cannot disagree with an unculled compositor.
FOOTPRINT_RADIUS = math.sqrt(2.0 * math.log(255.0))


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: intrinsics in pixels plus a rigid world-to-camera pose.

    Camera frame: x right, y down, z forward; pixel (u, v) = (fx*x/z + cx,
    fy*y/z + cy).
    """

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    world_to_camera: np.ndarray
    near: float = 0.01
    far: float = 1e6

    def __post_init__(self):
        w2c = np.asarray(self.world_to_camera, dtype=np.float64)
        if w2c.shape != (4, 4):
            raise ValueError("world_to_camera must be a 4x4 matrix")
        object.__setattr__(self, "world_to_camera", w2c)
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        if self.fx <= 0.0 or self.fy <= 0.0:
            raise ValueError("focal lengths must be positive")
        if not 0.0 < self.near < self.far:
            raise ValueError("need 0 < near < far")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    @staticmethod
    def look_at(
        width: int,
        height: int,
        fx: float,
        fy: float,
        cx: float,
        cy: float,
        eye,
        target,
        up=(0.0, 0.0, 1.0),
        near: float = 0.01,
        far: float = 1e6,
    ) -> "Camera":
        eye = np.asarray(eye, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        up = np.asarray(up, dtype=np.float64)
        forward = target - eye
        norm = np.linalg.norm(forward)
        if norm == 0.0:
            raise ValueError("eye and target coincide")
        forward = forward / norm
        right = np.cross(forward, up)
        if np.linalg.norm(right) < 1e-9:
            right = np.cross(forward, np.array([1.0, 0.0, 0.0]))
            if np.linalg.norm(right) < 1e-9:
                right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
        right = right / np.linalg.norm(right)
        down = np.cross(forward, right)
        rot = np.stack([right, down, forward])
        w2c = np.eye(4)
        w2c[:3, :3] = rot
        w2c[:3, 3] = -rot @ eye
        return Camera(width, height, fx, fy, cx, cy, w2c, near, far)


@dataclass(frozen=True)
class Projected2D:
    """One splat after projection to the image plane.

    normal_cam uses the visible-side-positive convention: a surface
    facing the camera reads (0, 0, 1).
    """

    pixel_center: np.ndarray
    cov2d: np.ndarray
    depth: float
    color: np.ndarray
    opacity: float
    normal_cam: np.ndarray
    sky: bool = False


@dataclass
class RenderTargets:
    """Per-pixel buffers for one frame."""

    rgb: np.ndarray
    depth_abs: np.ndarray
    depth_ref: np.ndarray
    normal: np.ndarray
    alpha: np.ndarray
    sky_mask: np.ndarray


def normalize_depth(depth_abs: np.ndarray, d_max: float) -> np.ndarray:
    """Elementwise min(1, depth_abs / d_max)."""
    if d_max <= 0.0:
        raise ValueError("d_max must be positive")
    return np.minimum(1.0, np.asarray(depth_abs, dtype=np.float64) / d_max)


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------

def _project_arrays(scene: GaussianScene, cam: Camera, cull_viewport: bool = True):
    """Project all splats; returns depth-sorted column arrays for visible ones.

    Splats outside (near, far) are dropped always; viewport footprint
    culling is optional so the oracle can keep every depth-valid splat.
    """
    n = len(scene)
    empty = {
        "center": np.zeros((0, 2)),
        "conic": np.zeros((0, 3)),
        "z": np.zeros(0),
        "color": np.zeros((0, 3)),
        "opacity": np.zeros(0),
        "normal": np.zeros((0, 3)),
        "sky": np.zeros(0, dtype=bool),
        "rx": np.zeros(0),
        "ry": np.zeros(0),
    }
    if n == 0:
        return empty

    rot = cam.rotation
    xc = scene.means @ rot.T + cam.translation
    z = xc[:, 2]
    keep = (z > cam.near) & (z < cam.far)
    if not np.any(keep):
        return empty

    idx = np.flatnonzero(keep)
    xc = xc[idx]
    z = z[idx]
    x, y = xc[:, 0], xc[:, 1]
    u = cam.fx * x / z + cam.cx
    v = cam.fy * y / z + cam.cy

    # world covariance rotated into the camera frame
    rq = quat_to_matrix(scene.rotations[idx])
    m = rq * scene.scales[idx][:, None, :]
    cov_w = m @ m.transpose(0, 2, 1)
    cov_c = np.einsum("ij,njk,lk->nil", rot, cov_w, rot)

    j1 = cam.fx / z
    j2 = -cam.fx * x / (z * z)
    j3 = cam.fy / z
    j4 = -cam.fy * y / (z * z)
    a11 = cov_c[:, 0, 0]
    a12 = cov_c[:, 0, 1]
    a13 = cov_c[:, 0, 2]
    a22 = cov_c[:, 1, 1]
    a23 = cov_c[:, 1, 2]
    a33 = cov_c[:, 2, 2]
    s00 = j1 * j1 * a11 + 2.0 * j1 * j2 * a13 + j2 * j2 * a33 + COV2D_DILATION
    s01 = j1 * j3 * a12 + j1 * j4 * a13 + j2 * j3 * a23 + j2 * j4 * a33
    s11 = j3 * j3 * a22 + 2.0 * j3 * j4 * a23 + j4 * j4 * a33 + COV2D_DILATION

    det = s00 * s11 - s01 * s01
    conic = np.stack([s11 / det, -s01 / det, s00 / det], axis=1)
    # tight per-axis extents of the cutoff ellipse: a pixel outside the
    # box is beyond FOOTPRINT_RADIUS in Mahalanobis distance
    rx = FOOTPRINT_RADIUS * np.sqrt(s00)
    ry = FOOTPRINT_RADIUS * np.sqrt(s11)

    if cull_viewport:
        inside = (
            (u + rx >= 0.0)
            & (u - rx <= cam.width - 1.0)
            & (v + ry >= 0.0)
            & (v - ry <= cam.height - 1.0)
        )
        if not np.all(inside):
            sel = np.flatnonzero(inside)
            idx, u, v, z, conic, rx, ry = (
                idx[sel], u[sel], v[sel], z[sel], conic[sel], rx[sel], ry[sel],
            )

    campos = cam.center
    dirs = scene.means[idx] - campos[None, :]
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    colors = eval_sh_colors(scene.sh_coeffs[idx], dirs, scene.sh_degree)

    normals_w = scene_shortest_axis_normals(scene, view_point=campos)[idx]
    normals_c = -(normals_w @ rot.T)

    # global front-to-back order, stable tie-break on splat index
    order = np.lexsort((idx, z))
    return {
        "center": np.stack([u, v], axis=1)[order],
        "conic": conic[order],
        "z": z[order],
        "color": colors[order],
        "opacity": scene.opacities[idx][order],
        "normal": normals_c[order],
        "sky": scene.sky_flags[idx][order],
        "rx": rx[order],
        "ry": ry[order],
    }


def project_gaussian(g: Gaussian, cam: Camera) -> Projected2D | None:
    """Project one Gaussian; None when depth- or viewport-culled."""
    xc = cam.rotation @ g.mean + cam.translation
    z = float(xc[2])
    if not cam.near < z < cam.far:
        return None
    x, y = float(xc[0]), float(xc[1])
    u = cam.fx * x / z + cam.cx
    v = cam.fy * y / z + cam.cy

    rq = quat_to_matrix(g.rotation)
    m = rq * g.scale[None, :]
    cov_c = cam.rotation @ (m @ m.T) @ cam.rotation.T
    jac = np.array(
        [
            [cam.fx / z, 0.0, -cam.fx * x / (z * z)],
            [0.0, cam.fy / z, -cam.fy * y / (z * z)],
        ]
    )
    cov2d = jac @ cov_c @ jac.T + COV2D_DILATION * np.eye(2)

    rx = FOOTPRINT_RADIUS * math.sqrt(cov2d[0, 0])
    ry = FOOTPRINT_RADIUS * math.sqrt(cov2d[1, 1])
    if u + rx < 0 or u - rx > cam.width - 1 or v + ry < 0 or v - ry > cam.height - 1:
        return None

    campos = cam.center
    view = g.mean - campos
    view = view / np.linalg.norm(view)
    degree = math.isqrt(g.sh_coeffs.shape[0]) - 1
    color = eval_sh_colors(g.sh_coeffs[None], view[None], degree)[0]
    n_w = shortest_axis_normal(g, view_point=campos)
    return Projected2D(
        pixel_center=np.array([u, v]),
        cov2d=cov2d,
        depth=z,
        color=color,
        opacity=float(g.opacity),
        normal_cam=-(cam.rotation @ n_w),
        sky=g.sky,
    )


# ---------------------------------------------------------------------------
# compositing
# ---------------------------------------------------------------------------

def _composite_block(
    xs: np.ndarray,
    ys: np.ndarray,
    data: dict,
    select: np.ndarray,
    z_depth: np.ndarray,
    termination: float,
):
    """Front-to-back blend of the selected splats over a pixel block.

    Returns per-pixel (rgb, depth, normal, sky_weight, transmittance).
    Splats with alpha below ALPHA_SKIP are dropped; once transmittance
    falls below the termination threshold the remaining splats are not
    composited, matching sequential semantics because transmittance is
    non-increasing.
    """
    center = data["center"][select]
    conic = data["conic"][select]
    dx = xs[None, :] - center[:, 0:1]
    dy = ys[None, :] - center[:, 1:2]
    power = -0.5 * (
        conic[:, 0:1] * dx * dx + 2.0 * conic[:, 1:2] * dx * dy + conic[:, 2:3] * dy * dy
    )
    alpha = data["opacity"][select][:, None] * np.exp(power)
    alpha[alpha < ALPHA_SKIP] = 0.0
    np.minimum(alpha, ALPHA_MAX, out=alpha)

    trans = np.cumprod(1.0 - alpha, axis=0)
    trans_before = np.vstack([np.ones((1, alpha.shape[1])), trans[:-1]])
    if termination > 0.0:
        live = trans_before >= termination
        weights = alpha * trans_before * live
        n_live = live.sum(axis=0)
        padded = np.vstack([np.ones((1, alpha.shape[1])), trans])
        t_final = padded[n_live, np.arange(alpha.shape[1])]
    else:
        weights = alpha * trans_before
        t_final = trans[-1]

    rgb = weights.T @ data["color"][select]
    depth = weights.T @ z_depth[select]
    normal = weights.T @ data["normal"][select]
    sky_w = weights.T @ data["sky"][select].astype(np.float64)
    return rgb, depth, normal, sky_w, t_final


def _resolve_engine(engine: str) -> str:
    if engine == "auto":
        return "numba" if _kernels.HAVE_NUMBA else "numpy"
    if engine == "numba" and not _kernels.HAVE_NUMBA:
        raise ValueError("numba engine requested but numba is not installed")
    if engine not in ("numpy", "numba"):
        raise ValueError(f"unknown engine '{engine}'")
    return engine


def rasterize(
    scene: GaussianScene,
    cam: Camera,
    d_max: float,
    background=(0.0, 0.0, 0.0),
    background_depth: float | None = None,
    termination: float = TERMINATION_DEFAULT,
    threads: int = 1,
    engine: str = "auto",
) -> RenderTargets:
    """Render RGB, depth, normal, alpha and sky-mask buffers for one view.

    Splats are depth-sorted globally and composited front to back per
    16x16 tile. Pixels the splats leave uncovered fall back to the
    background color and to background_depth (d_max unless overridden),
    so fog saturates on empty sky. Sky-flagged splats contribute d_max
    to the depth buffer regardless of their geometric distance.

    Tiles are independent work units writing disjoint buffer regions, so
    output is identical for any thread count. engine picks the tile
    compositor: the compiled numba kernel when available ("auto"), or
    the vectorized numpy reference path.
    """
    if d_max <= 0.0:
        raise ValueError("d_max must be positive")
    if background_depth is None:
        background_depth = d_max
    engine = _resolve_engine(engine)
    bg = np.asarray(background, dtype=np.float64)

    h, w = cam.height, cam.width
    rgb = np.tile(bg, (h, w, 1))
    depth_abs = np.full((h, w), background_depth, dtype=np.float64)
    normal = np.zeros((h, w, 3), dtype=np.float64)
    alpha_acc = np.zeros((h, w), dtype=np.float64)
    sky_weight = np.zeros((h, w), dtype=np.float64)

    data = _project_arrays(scene, cam)
    ns = data["z"].shape[0]
    if ns > 0:
        z_depth = np.where(data["sky"], d_max, data["z"])

        tiles_x = (w + TILE - 1) // TILE
        tiles_y = (h + TILE - 1) // TILE
        cx, cy = data["center"][:, 0], data["center"][:, 1]
        rx, ry = data["rx"], data["ry"]
        tx0 = np.clip(np.floor((cx - rx) / TILE).astype(np.int64), 0, tiles_x - 1)
        tx1 = np.clip(np.floor((cx + rx) / TILE).astype(np.int64), 0, tiles_x - 1)
        ty0 = np.clip(np.floor((cy - ry) / TILE).astype(np.int64), 0, tiles_y - 1)
        ty1 = np.clip(np.floor((cy + ry) / TILE).astype(np.int64), 0, tiles_y - 1)

        spans_x = tx1 - tx0 + 1
        counts = spans_x * (ty1 - ty0 + 1)
        total = int(counts.sum())
        owner = np.repeat(np.arange(ns), counts)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        local = np.arange(total) - starts[owner]
        sx = spans_x[owner]
        tile_id = (ty0[owner] + local // sx) * tiles_x + (tx0[owner] + local % sx)
        order = np.argsort(tile_id, kind="stable")
        tile_sorted = tile_id[order]
        owner_sorted = owner[order]
        boundaries = np.flatnonzero(np.diff(tile_sorted)) + 1
        group_starts = np.concatenate([[0], boundaries]).astype(np.int64)
        group_ends = np.concatenate([boundaries, [total]]).astype(np.int64)
        group_tiles = tile_sorted[group_starts]
        n_groups = group_tiles.shape[0]

        if engine == "numba" and n_groups > 0:
            _kernels.set_threads(threads)
            _kernels.composite_tiles(
                group_starts,
                group_ends,
                group_tiles,
                owner_sorted.astype(np.int64),
                data["center"],
                data["conic"],
                data["opacity"],
                data["color"],
                z_depth,
                data["normal"],
                data["sky"].astype(np.float64),
                tiles_x,
                TILE,
                w,
                h,
                bg,
                background_depth,
                termination,
                rgb,
                depth_abs,
                normal,
                alpha_acc,
                sky_weight,
            )
        else:

            def run_tile(gi: int) -> None:
                tile = int(group_tiles[gi])
                ty, tx = divmod(tile, tiles_x)
                x0, x1 = tx * TILE, min((tx + 1) * TILE, w)
                y0, y1 = ty * TILE, min((ty + 1) * TILE, h)
                pys, pxs = np.mgrid[y0:y1, x0:x1]
                shape = pys.shape
                select = owner_sorted[group_starts[gi] : group_ends[gi]]
                t_rgb, t_depth, t_norm, t_sky, t_final = _composite_block(
                    pxs.ravel().astype(np.float64),
                    pys.ravel().astype(np.float64),
                    data,
                    select,
                    z_depth,
                    termination,
                )
                rgb[y0:y1, x0:x1] = (t_rgb + t_final[:, None] * bg).reshape(*shape, 3)
                depth_abs[y0:y1, x0:x1] = (t_depth + t_final * background_depth).reshape(shape)
                normal[y0:y1, x0:x1] = t_norm.reshape(*shape, 3)
                alpha_acc[y0:y1, x0:x1] = (1.0 - t_final).reshape(shape)
                sky_weight[y0:y1, x0:x1] = t_sky.reshape(shape)

            if threads > 1 and n_groups > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    list(pool.map(run_tile, range(n_groups)))
            else:
                for gi in range(n_groups):
                    run_tile(gi)

    return RenderTargets(
        rgb=rgb,
        depth_abs=depth_abs,
        depth_ref=normalize_depth(depth_abs, d_max),
        normal=normal,
        alpha=alpha_acc,
        sky_mask=sky_weight > 0.5,
    )


def brute_force_pixel(
    scene: GaussianScene,
    cam: Camera,
    pixel,
    d_max: float,
    background=(0.0, 0.0, 0.0),
    background_depth: float | None = None,
):
    """Testing oracle: full front-to-back blend of every depth-valid splat.

    No tiling, no footprint culling, no early termination; all splats
    are globally depth-sorted and composited at the queried pixel(s).
    Accepts a single (2,) pixel or an (M, 2) batch; returns (rgb,
    depth_abs, alpha) with matching leading shape.
    """
    if d_max <= 0.0:
        raise ValueError("d_max must be positive")
    if background_depth is None:
        background_depth = d_max
    bg = np.asarray(background, dtype=np.float64)
    pixels = np.asarray(pixel, dtype=np.float64)
    single = pixels.ndim == 1
    pixels = np.atleast_2d(pixels)

    data = _project_arrays(scene, cam, cull_viewport=False)
    ns = data["z"].shape[0]
    m = pixels.shape[0]
    if ns == 0:
        rgb = np.tile(bg, (m, 1))
        depth = np.full(m, background_depth)
        alpha = np.zeros(m)
    else:
        z_depth = np.where(data["sky"], d_max, data["z"])
        out_rgb = np.empty((m, 3))
        out_depth = np.empty(m)
        out_alpha = np.empty(m)
        for i in range(m):
            dx = pixels[i, 0] - data["center"][:, 0]
            dy = pixels[i, 1] - data["center"][:, 1]
            conic = data["conic"]
            power = -0.5 * (
                conic[:, 0] * dx * dx + 2.0 * conic[:, 1] * dx * dy + conic[:, 2] * dy * dy
            )
            a = data["opacity"] * np.exp(power)
            a[a < ALPHA_SKIP] = 0.0
            np.minimum(a, ALPHA_MAX, out=a)
            trans = np.cumprod(1.0 - a)
            trans_before = np.concatenate([[1.0], trans[:-1]])
            weights = a * trans_before
            t_final = trans[-1]
            out_rgb[i] = weights @ data["color"] + t_final * bg
            out_depth[i] = weights @ z_depth + t_final * background_depth
            out_alpha[i] = 1.0 - t_final
        rgb, depth, alpha = out_rgb, out_depth, out_alpha

    if single:
        return rgb[0], float(depth[0]), float(alpha[0])
    return rgb, depth, alpha
