"""Depth, normal and SSIM regularizers, evaluable at desk scale."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rasterizer import Camera, rasterize
from .scene import GaussianScene

STD_FLOOR = 1e-6


class RefinementDiverged(RuntimeError):
    """Toy refinement hit a NaN loss; .trace holds the losses so far."""

    def __init__(self, message: str, trace: list[float]):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class ReferenceDepthMap:
    """Externally supplied relative depth with a sky mask."""

    values: np.ndarray
    sky_mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        sky = np.asarray(self.sky_mask, dtype=bool)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sky_mask", sky)
        if values.ndim != 2 or values.shape != sky.shape:
            raise ValueError("values and sky_mask must be matching 2-D maps")
        if not np.all(np.isfinite(values)) or np.any(values < 0.0):
            raise ValueError("reference depth must be finite and non-negative")


@dataclass(frozen=True)
class GeometryLossConfig:
    gamma: float = 1.0
    lambda_ssim: float = 0.2
    lambda_normal: float = 0.1
    it_n: int = 6000
    patch_size: int = 8
    d_max: float = 100.0

    def __post_init__(self):
        if min(self.gamma, self.lambda_ssim, self.lambda_normal) < 0.0:
            raise ValueError("loss weights must be non-negative")
        if self.patch_size < 2:
            raise ValueError("patch_size must be at least 2")


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def normalize_global(depth: np.ndarray) -> np.ndarray:
    """Standardize the whole map: (d - mean) / max(std, floor)."""
    depth = np.asarray(depth, dtype=np.float64)
    if depth.size == 0:
        raise ValueError("empty depth map")
    return (depth - depth.mean()) / max(float(depth.std()), STD_FLOOR)


def normalize_local(depth: np.ndarray, patch_size: int) -> np.ndarray:
    """Standardize each patch independently; edge patches may be smaller."""
    depth = np.asarray(depth, dtype=np.float64)
    if depth.size == 0:
        raise ValueError("empty depth map")
    out = np.empty_like(depth)
    h, w = depth.shape
    for y0 in range(0, h, patch_size):
        for x0 in range(0, w, patch_size):
            patch = depth[y0 : y0 + patch_size, x0 : x0 + patch_size]
            out[y0 : y0 + patch_size, x0 : x0 + patch_size] = (
                patch - patch.mean()
            ) / max(float(patch.std()), STD_FLOOR)
    return out


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def loss_hard_soft(
    depth_ref_rendered: np.ndarray,
    reference: ReferenceDepthMap,
    cfg: GeometryLossConfig,
) -> float:
    """Global plus gamma-weighted local normalized-depth discrepancy.

    Both the opacity-driven and position-driven regularization variants
    evaluate to this same expression; they differ only in which Gaussian
    attributes receive its gradient inside a training loop.
    """
    rendered = np.asarray(depth_ref_rendered, dtype=np.float64)
    if rendered.shape != reference.values.shape:
        raise ValueError("depth map dimensions do not match the reference")
    g = np.abs(normalize_global(rendered) - normalize_global(reference.values)).mean()
    l = np.abs(
        normalize_local(rendered, cfg.patch_size)
        - normalize_local(reference.values, cfg.patch_size)
    ).mean()
    return float(g + cfg.gamma * l)


def loss_depth(hard: float, soft: float) -> float:
    return hard + soft


def loss_normal(rendered: np.ndarray, pseudo: np.ndarray) -> float:
    """Mean per-pixel euclidean distance between two normal maps."""
    rendered = np.asarray(rendered, dtype=np.float64)
    pseudo = np.asarray(pseudo, dtype=np.float64)
    if rendered.shape != pseudo.shape:
        raise ValueError("normal map dimensions do not match")
    return float(np.linalg.norm(rendered - pseudo, axis=-1).mean())


def loss_total(
    l1: float,
    l_depth: float,
    l_ssim: float,
    l_normal: float,
    iteration: int,
    cfg: GeometryLossConfig,
) -> float:
    """Combined training loss; the normal term joins once iteration >= it_n."""
    if iteration < 0:
        raise ValueError("iteration must be non-negative")
    total = l1 + l_depth + cfg.lambda_ssim * l_ssim
    if iteration >= cfg.it_n:
        total += cfg.lambda_normal * l_normal
    return total


# ---------------------------------------------------------------------------
# pseudo normals
# ---------------------------------------------------------------------------

def pseudo_normals_from_depth(reference: ReferenceDepthMap, cam: Camera) -> np.ndarray:
    """Normals from backprojected depth via finite-difference cross products.

    Output is unit length in the camera frame with the visible side
    mapped to +z (a fronto-parallel plane reads (0, 0, 1)); degenerate
    gradients fall back to (0, 0, 1).
    """
    d = reference.values
    h, w = d.shape
    us, vs = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    px = d * (us - cam.cx) / cam.fx
    py = d * (vs - cam.cy) / cam.fy
    pts = np.stack([px, py, d], axis=-1)

    du = np.stack([np.gradient(pts[..., c], axis=1) for c in range(3)], axis=-1)
    dv = np.stack([np.gradient(pts[..., c], axis=0) for c in range(3)], axis=-1)
    normals = np.cross(du, dv)
    norms = np.linalg.norm(normals, axis=-1)
    degenerate = norms < 1e-15
    norms[degenerate] = 1.0
    normals /= norms[..., None]
    normals[degenerate] = (0.0, 0.0, 1.0)
    flip = normals[..., 2] < 0.0
    normals[flip] *= -1.0
    return normals


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------

def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    win = np.outer(g, g)
    return win / win.sum()


def _windowed_mean(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    views = np.lib.stride_tricks.sliding_window_view(img, win.shape)
    return np.tensordot(views, win, axes=([2, 3], [0, 1]))


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    window_size: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    data_range: float = 1.0,
) -> float:
    """Single-scale SSIM with a Gaussian window, averaged over valid pixels.

    Multichannel images are scored per channel and averaged.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("image dimensions do not match")
    if a.ndim == 3:
        return float(
            np.mean([ssim(a[..., c], b[..., c], window_size, sigma, k1, k2, data_range)
                     for c in range(a.shape[2])])
        )
    if min(a.shape) < window_size:
        raise ValueError(f"images must be at least {window_size} pixels per side")

    win = _gaussian_window(window_size, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a = _windowed_mean(a, win)
    mu_b = _windowed_mean(b, win)
    var_a = _windowed_mean(a * a, win) - mu_a * mu_a
    var_b = _windowed_mean(b * b, win) - mu_b * mu_b
    cov = _windowed_mean(a * b, win) - mu_a * mu_b
    score = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    )
    return float(score.mean())


# ---------------------------------------------------------------------------
# toy refinement
# ---------------------------------------------------------------------------

def _objective(
    scene: GaussianScene,
    cams: list[Camera],
    references: list[ReferenceDepthMap],
    cfg: GeometryLossConfig,
    iteration: int,
    rgb_targets: list[np.ndarray] | None,
    pseudo: list[np.ndarray],
) -> float:
    total = 0.0
    for i, cam in enumerate(cams):
        targets = rasterize(scene, cam, cfg.d_max)
        e = loss_hard_soft(targets.depth_ref, references[i], cfg)
        l_d = loss_depth(e, e)
        l1 = 0.0
        l_s = 0.0
        if rgb_targets is not None:
            l1 = float(np.abs(targets.rgb - rgb_targets[i]).mean())
            l_s = 1.0 - ssim(targets.rgb, rgb_targets[i])
        l_n = loss_normal(targets.normal, pseudo[i])
        total += loss_total(l1, l_d, l_s, l_n, iteration, cfg)
    return total / len(cams)


def refine_toy(
    scene: GaussianScene,
    cams: list[Camera],
    references: list[ReferenceDepthMap],
    cfg: GeometryLossConfig,
    steps: int,
    rgb_targets: list[np.ndarray] | None = None,
    mean_lr: float = 0.05,
    opacity_lr: float = 0.05,
    fd_eps: float = 1e-3,
) -> tuple[GaussianScene, list[float]]:
    """Desk-scale gradient descent on Gaussian means and opacities.

    Gradients come from central finite differences of the full loss, so
    keep scenes tiny (tens of Gaussians, small frames). Steps that would
    increase the loss are retried at half length (backtracking), which
    keeps the trace non-increasing. Returns the refined scene and the
    per-step loss trace (length steps + 1). Raises RefinementDiverged
    when the loss turns NaN.
    """
    if len(cams) != len(references):
        raise ValueError("need one reference per camera")
    pseudo = [pseudo_normals_from_depth(ref, cam) for ref, cam in zip(references, cams)]

    means = scene.means.copy()
    opacities = scene.opacities.copy()
    trace: list[float] = []

    def build(m, o):
        return scene.replace(means=m, opacities=o)

    def evaluate(m, o, iteration):
        return _objective(build(m, o), cams, references, cfg, iteration, rgb_targets, pseudo)

    current = evaluate(means, opacities, 0)
    trace.append(current)
    n = len(scene)
    for step in range(steps):
        grad_m = np.zeros_like(means)
        grad_o = np.zeros_like(opacities)
        for i in range(n):
            for axis in range(3):
                shift = np.zeros_like(means)
                shift[i, axis] = fd_eps
                hi = evaluate(means + shift, opacities, step)
                lo = evaluate(means - shift, opacities, step)
                grad_m[i, axis] = (hi - lo) / (2.0 * fd_eps)
            shift_o = np.zeros_like(opacities)
            shift_o[i] = fd_eps
            hi = evaluate(means, np.clip(opacities + shift_o, 0.0, 1.0), step)
            lo = evaluate(means, np.clip(opacities - shift_o, 0.0, 1.0), step)
            grad_o[i] = (hi - lo) / (2.0 * fd_eps)

        scale = 1.0
        accepted = current
        for _ in range(8):
            cand_means = means - scale * mean_lr * grad_m
            cand_opac = np.clip(opacities - scale * opacity_lr * grad_o, 0.0, 1.0)
            candidate = evaluate(cand_means, cand_opac, step + 1)
            if not np.isfinite(candidate):
                raise RefinementDiverged(f"loss diverged at step {step + 1}", trace)
            if candidate <= current:
                means, opacities, accepted = cand_means, cand_opac, candidate
                break
            scale *= 0.5
        current = accepted
        trace.append(current)
    return build(means, opacities), trace
