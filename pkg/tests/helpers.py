"""Shared fixture builders for the test suite."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from splatweather import Camera, GaussianScene
from splatweather.scene import rgb_to_dc

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def make_scene(
    means,
    scales=0.1,
    rotations=None,
    opacities=0.8,
    colors=(0.5, 0.5, 0.5),
    sh_degree=0,
    sky=None,
) -> GaussianScene:
    """Scene builder with broadcasting for scalar scale/opacity/color."""
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    n = means.shape[0]
    scales = np.asarray(scales, dtype=np.float64)
    if scales.ndim == 0:
        scales = np.full((n, 3), float(scales))
    elif scales.ndim == 1:
        scales = np.tile(scales, (n, 1))
    if rotations is None:
        rotations = np.tile(IDENTITY_QUAT, (n, 1))
    else:
        rotations = np.atleast_2d(np.asarray(rotations, dtype=np.float64))
        if rotations.shape[0] == 1:
            rotations = np.tile(rotations, (n, 1))
    opacities = np.broadcast_to(np.asarray(opacities, dtype=np.float64), (n,)).copy()
    colors = np.atleast_2d(np.asarray(colors, dtype=np.float64))
    if colors.shape[0] == 1:
        colors = np.tile(colors, (n, 1))
    k = (sh_degree + 1) ** 2
    sh = np.zeros((n, k, 3))
    sh[:, 0, :] = rgb_to_dc(colors)
    return GaussianScene(means, scales, rotations, opacities, sh, sh_degree, sky)


def forward_camera(width=64, height=64, focal=60.0, near=0.01, far=1e6) -> Camera:
    """Camera at the origin looking along world +z (identity pose).

    The principal point sits on an integer pixel so on-axis Gaussians
    project exactly onto a pixel center.
    """
    return Camera(
        width, height, focal, focal, width // 2, height // 2, np.eye(4), near, far
    )


def random_scene(rng: np.random.Generator, n: int, depth_range=(2.0, 12.0)) -> GaussianScene:
    """Random anisotropic Gaussians in front of a forward camera."""
    means = np.stack(
        [
            rng.uniform(-3.0, 3.0, n),
            rng.uniform(-3.0, 3.0, n),
            rng.uniform(*depth_range, n),
        ],
        axis=1,
    )
    scales = rng.uniform(0.05, 0.6, (n, 3))
    quats = rng.normal(size=(n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    opacities = rng.uniform(0.05, 1.0, n)
    colors = rng.uniform(0.0, 1.0, (n, 3))
    sh = rgb_to_dc(colors)[:, None, :]
    return GaussianScene(means, scales, quats, opacities, sh, 0)


def write_raw_splat_ply(path: Path, rows: list[dict], extra_props=()) -> None:
    """Hand-rolled splat PLY writer, independent of splatweather.save_scene.

    Each row maps property names to floats; properties are the 14 splat
    basics (sh degree 0) plus any extras.
    """
    names = [
        "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
        "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
    ] + list(extra_props)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(rows)}"]
    header += [f"property float {name}" for name in names]
    header.append("end_header")
    with open(path, "wb") as handle:
        handle.write(("\n".join(header) + "\n").encode("ascii"))
        for row in rows:
            values = [row.get(name, 0.0) for name in names]
            handle.write(struct.pack(f"<{len(values)}f", *values))


def default_row(**overrides) -> dict:
    row = {"rot_0": 1.0, "scale_0": -2.0, "scale_1": -2.0, "scale_2": -2.0}
    row.update(overrides)
    return row
