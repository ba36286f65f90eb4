"""Gaussian splat scenes: containers, covariance math, splat PLY I/O, sky dome."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.special import expit, logit

# Real SH basis constants (degree 0..3), standard splatting convention.
SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.3153915652525205,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

QUAT_UNIT_TOL = 1e-6


class SceneFormatError(ValueError):
    """Splat file violates the expected PLY layout."""


class SceneDataError(ValueError):
    """Splat file parses but contains unusable values."""


def sh_coeff_count(degree: int) -> int:
    return (degree + 1) ** 2


# ---------------------------------------------------------------------------
# quaternion helpers (w, x, y, z convention)
# ---------------------------------------------------------------------------

def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0.0):
        raise ValueError("zero-norm quaternion")
    return q / norm


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternion(s) to rotation matrix/matrices, shape (...,4) -> (...,3,3)."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    m[..., 0, 1] = 2.0 * (x * y - w * z)
    m[..., 0, 2] = 2.0 * (x * z + w * y)
    m[..., 1, 0] = 2.0 * (x * y + w * z)
    m[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    m[..., 1, 2] = 2.0 * (y * z - w * x)
    m[..., 2, 0] = 2.0 * (x * z - w * y)
    m[..., 2, 1] = 2.0 * (y * z + w * x)
    m[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return m


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    x = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    y = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    z = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]
    return np.array([w, x, y, z])


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_rotate_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Quaternion rotating unit vector a onto unit vector b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = float(np.dot(a, b))
    if d < -1.0 + 1e-12:
        # opposite vectors: 180 degrees about any axis orthogonal to a
        helper = np.array([1.0, 0.0, 0.0])
        if abs(a[0]) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        axis = np.cross(a, helper)
        return quat_from_axis_angle(axis, np.pi)
    q = np.concatenate([[1.0 + d], np.cross(a, b)])
    return quat_normalize(q)


def random_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation (Shoemake subgroup method)."""
    u1, u2, u3 = rng.uniform(size=3)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    return np.array(
        [
            a * np.sin(2.0 * np.pi * u2),
            a * np.cos(2.0 * np.pi * u2),
            b * np.sin(2.0 * np.pi * u3),
            b * np.cos(2.0 * np.pi * u3),
        ]
    )


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AABB:
    """Axis-aligned bounding box in world units."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=np.float64))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=np.float64))
        if self.lo.shape != (3,) or self.hi.shape != (3,):
            raise ValueError("AABB corners must be 3-vectors")
        if np.any(self.hi < self.lo):
            raise ValueError("AABB hi must be >= lo")

    @staticmethod
    def of_points(points: np.ndarray) -> "AABB":
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return AABB(points.min(axis=0), points.max(axis=0))

    def contains(self, points: np.ndarray, atol: float = 0.0) -> bool:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return bool(
            np.all(points >= self.lo - atol) and np.all(points <= self.hi + atol)
        )

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def size(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))


@dataclass(frozen=True)
class Gaussian:
    """One splatting primitive.

    Attributes:
        mean: world-space center, 3-vector.
        scale: per-axis standard deviations, strictly positive.
        rotation: unit quaternion (w, x, y, z).
        opacity: blending weight in [0, 1].
        sh_coeffs: ((degree+1)^2, 3) RGB spherical-harmonic coefficients.
        sky: marks synthetic sky-dome primitives.
    """

    mean: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray
    opacity: float
    sh_coeffs: np.ndarray
    sky: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=np.float64))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "sh_coeffs", np.asarray(self.sh_coeffs, dtype=np.float64))
        if self.mean.shape != (3,) or self.scale.shape != (3,):
            raise ValueError("mean and scale must be 3-vectors")
        if np.any(self.scale <= 0.0):
            raise ValueError("scale components must be strictly positive")
        if self.rotation.shape != (4,):
            raise ValueError("rotation must be a quaternion (w, x, y, z)")
        if abs(np.linalg.norm(self.rotation) - 1.0) > QUAT_UNIT_TOL:
            raise ValueError("rotation quaternion must have unit norm")
        if not 0.0 <= self.opacity <= 1.0:
            raise ValueError("opacity must lie in [0, 1]")
        if self.sh_coeffs.ndim != 2 or self.sh_coeffs.shape[1] != 3:
            raise ValueError("sh_coeffs must have shape (K, 3)")


class GaussianScene:
    """Column store of Gaussians, read-only after construction.

    Mutating operations return new scenes; instances are safe to share
    across worker threads.
    """

    def __init__(
        self,
        means: np.ndarray,
        scales: np.ndarray,
        rotations: np.ndarray,
        opacities: np.ndarray,
        sh_coeffs: np.ndarray,
        sh_degree: int,
        sky_flags: np.ndarray | None = None,
    ):
        means = np.ascontiguousarray(means, dtype=np.float64)
        scales = np.ascontiguousarray(scales, dtype=np.float64)
        rotations = np.ascontiguousarray(rotations, dtype=np.float64)
        opacities = np.ascontiguousarray(opacities, dtype=np.float64)
        sh_coeffs = np.ascontiguousarray(sh_coeffs, dtype=np.float64)
        n = means.shape[0]
        if sky_flags is None:
            sky_flags = np.zeros(n, dtype=bool)
        sky_flags = np.ascontiguousarray(sky_flags, dtype=bool)

        if not 0 <= sh_degree <= 3:
            raise ValueError("sh_degree must be in 0..3")
        k = sh_coeff_count(sh_degree)
        if means.shape != (n, 3) or scales.shape != (n, 3):
            raise ValueError("means and scales must have shape (N, 3)")
        if rotations.shape != (n, 4):
            raise ValueError("rotations must have shape (N, 4)")
        if opacities.shape != (n,) or sky_flags.shape != (n,):
            raise ValueError("opacities and sky_flags must have shape (N,)")
        if sh_coeffs.shape != (n, k, 3):
            raise ValueError(
                f"sh_coeffs must have shape (N, {k}, 3) for sh_degree={sh_degree}"
            )
        if n > 0:
            if np.any(scales <= 0.0):
                raise ValueError("scale components must be strictly positive")
            norms = np.linalg.norm(rotations, axis=1)
            if np.any(np.abs(norms - 1.0) > QUAT_UNIT_TOL):
                raise ValueError("rotation quaternions must have unit norm")
            if np.any(opacities < 0.0) or np.any(opacities > 1.0):
                raise ValueError("opacities must lie in [0, 1]")

        for arr in (means, scales, rotations, opacities, sh_coeffs, sky_flags):
            arr.flags.writeable = False
        self._means = means
        self._scales = scales
        self._rotations = rotations
        self._opacities = opacities
        self._sh_coeffs = sh_coeffs
        self._sky_flags = sky_flags
        self._sh_degree = int(sh_degree)
        self._bounds = (
            AABB.of_points(means) if n > 0 else AABB(np.zeros(3), np.zeros(3))
        )

    # column views -----------------------------------------------------
    @property
    def means(self) -> np.ndarray:
        return self._means

    @property
    def scales(self) -> np.ndarray:
        return self._scales

    @property
    def rotations(self) -> np.ndarray:
        return self._rotations

    @property
    def opacities(self) -> np.ndarray:
        return self._opacities

    @property
    def sh_coeffs(self) -> np.ndarray:
        return self._sh_coeffs

    @property
    def sky_flags(self) -> np.ndarray:
        return self._sky_flags

    @property
    def sh_degree(self) -> int:
        return self._sh_degree

    @property
    def bounds(self) -> AABB:
        return self._bounds

    def __len__(self) -> int:
        return self._means.shape[0]

    def gaussian(self, i: int) -> Gaussian:
        return Gaussian(
            mean=self._means[i],
            scale=self._scales[i],
            rotation=self._rotations[i],
            opacity=float(self._opacities[i]),
            sh_coeffs=self._sh_coeffs[i],
            sky=bool(self._sky_flags[i]),
        )

    def __iter__(self) -> Iterator[Gaussian]:
        return (self.gaussian(i) for i in range(len(self)))

    @staticmethod
    def from_gaussians(gaussians: Sequence[Gaussian], sh_degree: int) -> "GaussianScene":
        k = sh_coeff_count(sh_degree)
        n = len(gaussians)
        means = np.array([g.mean for g in gaussians]).reshape(n, 3)
        scales = np.array([g.scale for g in gaussians]).reshape(n, 3)
        rotations = np.array([g.rotation for g in gaussians]).reshape(n, 4)
        opacities = np.array([g.opacity for g in gaussians]).reshape(n)
        sh = np.array([g.sh_coeffs for g in gaussians]).reshape(n, k, 3)
        sky = np.array([g.sky for g in gaussians], dtype=bool).reshape(n)
        return GaussianScene(means, scales, rotations, opacities, sh, sh_degree, sky)

    def replace(self, **columns) -> "GaussianScene":
        """New scene with some columns substituted."""
        kwargs = dict(
            means=self._means,
            scales=self._scales,
            rotations=self._rotations,
            opacities=self._opacities,
            sh_coeffs=self._sh_coeffs,
            sh_degree=self._sh_degree,
            sky_flags=self._sky_flags,
        )
        kwargs.update(columns)
        return GaussianScene(**kwargs)

    def appended(
        self,
        means: np.ndarray,
        scales: np.ndarray,
        rotations: np.ndarray,
        opacities: np.ndarray,
        sh_coeffs: np.ndarray,
        sky_flags: np.ndarray,
    ) -> "GaussianScene":
        """New scene with extra Gaussians appended; existing columns are untouched."""
        return GaussianScene(
            np.concatenate([self._means, means]),
            np.concatenate([self._scales, scales]),
            np.concatenate([self._rotations, rotations]),
            np.concatenate([self._opacities, opacities]),
            np.concatenate([self._sh_coeffs, sh_coeffs]),
            self._sh_degree,
            np.concatenate([self._sky_flags, sky_flags]),
        )


# ---------------------------------------------------------------------------
# splat PLY I/O
# ---------------------------------------------------------------------------

_PLY_FLOAT_NAMES = {"float", "float32"}


def _base_property_names(sh_degree: int) -> list[str]:
    names = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"]
    n_rest = 3 * (sh_coeff_count(sh_degree) - 1)
    names += [f"f_rest_{i}" for i in range(n_rest)]
    names += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    return names


def _parse_ply_header(handle) -> tuple[int, list[str]]:
    """Returns (vertex_count, property names) for a binary little-endian splat PLY."""
    magic = handle.readline().strip()
    if magic != b"ply":
        raise SceneFormatError("not a PLY file (missing 'ply' magic)")
    fmt = handle.readline().strip()
    if fmt != b"format binary_little_endian 1.0":
        raise SceneFormatError("expected 'format binary_little_endian 1.0'")
    count = None
    names: list[str] = []
    in_vertex = False
    while True:
        raw = handle.readline()
        if not raw:
            raise SceneFormatError("unexpected end of file inside PLY header")
        line = raw.decode("ascii", errors="replace").strip()
        if line == "end_header":
            break
        if line.startswith("comment") or not line:
            continue
        parts = line.split()
        if parts[0] == "element":
            if parts[1] == "vertex":
                count = int(parts[2])
                in_vertex = True
            else:
                raise SceneFormatError(f"unsupported PLY element '{parts[1]}'")
        elif parts[0] == "property":
            if not in_vertex:
                raise SceneFormatError("property declared before vertex element")
            if parts[1] not in _PLY_FLOAT_NAMES:
                raise SceneFormatError(
                    f"property '{parts[2]}' has unsupported type '{parts[1]}'"
                )
            names.append(parts[2])
    if count is None:
        raise SceneFormatError("missing 'element vertex' declaration")
    return count, names


def load_scene(path: str | Path, sh_degree: int = 0) -> GaussianScene:
    """Load a trained splat point cloud from binary little-endian PLY.

    The file stores opacity as a pre-sigmoid logit, scales as pre-exp
    log-scales, and unnormalized quaternions; all are mapped to their
    rendering-ready forms here. Extra properties (e.g. nx/ny/nz) are
    ignored, as are higher-order SH bands beyond the requested degree.
    """
    path = Path(path)
    with open(path, "rb") as handle:
        count, names = _parse_ply_header(handle)
        data = handle.read(4 * len(names) * count)
    if len(data) < 4 * len(names) * count:
        raise SceneFormatError("vertex data truncated")
    table = np.frombuffer(data, dtype="<f4", count=len(names) * count)
    table = table.reshape(count, len(names)).astype(np.float64)

    columns = {}
    for prop in _base_property_names(sh_degree):
        if prop not in names:
            raise SceneFormatError(f"missing property '{prop}'")
        col = table[:, names.index(prop)]
        bad = np.flatnonzero(~np.isfinite(col))
        if bad.size:
            raise SceneDataError(
                f"non-finite value in property '{prop}' at element {int(bad[0])}"
            )
        columns[prop] = col

    means = np.stack([columns["x"], columns["y"], columns["z"]], axis=1)
    opacities = expit(columns["opacity"])
    scales = np.exp(
        np.stack([columns["scale_0"], columns["scale_1"], columns["scale_2"]], axis=1)
    )
    quats = np.stack([columns[f"rot_{i}"] for i in range(4)], axis=1)
    norms = np.linalg.norm(quats, axis=1)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise SceneDataError(f"zero-norm quaternion at element {int(bad[0])}")
    quats = quats / norms[:, None]

    k = sh_coeff_count(sh_degree)
    sh = np.zeros((count, k, 3), dtype=np.float64)
    sh[:, 0, 0] = columns["f_dc_0"]
    sh[:, 0, 1] = columns["f_dc_1"]
    sh[:, 0, 2] = columns["f_dc_2"]
    if k > 1:
        # f_rest is channel-major: all R coefficients, then G, then B
        rest = np.stack([columns[f"f_rest_{i}"] for i in range(3 * (k - 1))], axis=1)
        sh[:, 1:, :] = rest.reshape(count, 3, k - 1).transpose(0, 2, 1)

    return GaussianScene(means, scales, quats, opacities, sh, sh_degree)


def save_scene(scene: GaussianScene, path: str | Path) -> None:
    """Write a scene back to the binary splat PLY layout read by load_scene.

    Opacities near 0 or 1 are nudged inside the open interval so the
    stored logit stays finite; the sky flag is not part of the format
    and is dropped.
    """
    path = Path(path)
    names = _base_property_names(scene.sh_degree)
    k = sh_coeff_count(scene.sh_degree)
    n = len(scene)

    table = np.empty((n, len(names)), dtype=np.float64)
    col = {name: i for i, name in enumerate(names)}
    table[:, [col["x"], col["y"], col["z"]]] = scene.means
    table[:, [col["f_dc_0"], col["f_dc_1"], col["f_dc_2"]]] = scene.sh_coeffs[:, 0, :]
    if k > 1:
        rest = scene.sh_coeffs[:, 1:, :].transpose(0, 2, 1).reshape(n, 3 * (k - 1))
        table[:, col["f_rest_0"] : col["f_rest_0"] + 3 * (k - 1)] = rest
    table[:, col["opacity"]] = logit(np.clip(scene.opacities, 1e-12, 1.0 - 1e-12))
    table[:, [col["scale_0"], col["scale_1"], col["scale_2"]]] = np.log(scene.scales)
    for i in range(4):
        table[:, col[f"rot_{i}"]] = scene.rotations[:, i]

    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {name}" for name in names]
    header.append("end_header")
    with open(path, "wb") as handle:
        handle.write(("\n".join(header) + "\n").encode("ascii"))
        handle.write(table.astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def covariance_3d(scale: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """3x3 covariance R S S^T R^T from per-axis scales and a unit quaternion."""
    scale = np.asarray(scale, dtype=np.float64)
    rotation = np.asarray(rotation, dtype=np.float64)
    if np.any(scale <= 0.0):
        raise ValueError("scale components must be strictly positive")
    if abs(np.linalg.norm(rotation) - 1.0) > QUAT_UNIT_TOL:
        raise ValueError("rotation quaternion must have unit norm")
    m = quat_to_matrix(rotation) * scale[None, :]
    return m @ m.T


def _orient_up(normals: np.ndarray) -> np.ndarray:
    """Flip each row into the +z hemisphere (deterministic on boundaries)."""
    normals = normals.copy()
    flip = normals[:, 2] < 0.0
    on_xy = normals[:, 2] == 0.0
    flip |= on_xy & (normals[:, 1] < 0.0)
    flip |= on_xy & (normals[:, 1] == 0.0) & (normals[:, 0] < 0.0)
    normals[flip] *= -1.0
    return normals


def scene_shortest_axis_normals(
    scene: GaussianScene, view_point: np.ndarray | None = None
) -> np.ndarray:
    """Per-Gaussian unit normals along each shortest principal axis.

    Sign faces the given view point when provided, otherwise the +z
    hemisphere. Ties on the minimal scale pick the lowest axis index.
    """
    if len(scene) == 0:
        return np.zeros((0, 3), dtype=np.float64)
    rot = quat_to_matrix(scene.rotations)
    axis = np.argmin(scene.scales, axis=1)
    normals = rot[np.arange(len(scene)), :, axis]
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    if view_point is None:
        return _orient_up(normals)
    view_point = np.asarray(view_point, dtype=np.float64)
    toward = view_point[None, :] - scene.means
    flip = np.einsum("ij,ij->i", normals, toward) < 0.0
    normals[flip] *= -1.0
    return normals


def shortest_axis_normal(g: Gaussian, view_point: np.ndarray | None = None) -> np.ndarray:
    rot = quat_to_matrix(g.rotation)
    axis = int(np.argmin(g.scale))
    n = rot[:, axis]
    n = n / np.linalg.norm(n)
    if view_point is not None:
        if float(np.dot(n, np.asarray(view_point, dtype=np.float64) - g.mean)) < 0.0:
            n = -n
        return n
    return _orient_up(n[None, :])[0]


# ---------------------------------------------------------------------------
# spherical harmonics color
# ---------------------------------------------------------------------------

def _sh_basis(dirs: np.ndarray, degree: int) -> np.ndarray:
    """Real SH basis values, shape (N, (degree+1)^2)."""
    n = dirs.shape[0]
    basis = np.empty((n, sh_coeff_count(degree)), dtype=np.float64)
    basis[:, 0] = SH_C0
    if degree >= 1:
        x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
        basis[:, 1] = -SH_C1 * y
        basis[:, 2] = SH_C1 * z
        basis[:, 3] = -SH_C1 * x
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        basis[:, 4] = SH_C2[0] * xy
        basis[:, 5] = SH_C2[1] * yz
        basis[:, 6] = SH_C2[2] * (2.0 * zz - xx - yy)
        basis[:, 7] = SH_C2[3] * xz
        basis[:, 8] = SH_C2[4] * (xx - yy)
    if degree >= 3:
        basis[:, 9] = SH_C3[0] * y * (3.0 * xx - yy)
        basis[:, 10] = SH_C3[1] * xy * z
        basis[:, 11] = SH_C3[2] * y * (4.0 * zz - xx - yy)
        basis[:, 12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
        basis[:, 13] = SH_C3[4] * x * (4.0 * zz - xx - yy)
        basis[:, 14] = SH_C3[5] * z * (xx - yy)
        basis[:, 15] = SH_C3[6] * x * (xx - 3.0 * yy)
    return basis


def eval_sh_colors(sh_coeffs: np.ndarray, view_dirs: np.ndarray, degree: int) -> np.ndarray:
    """Batched SH color evaluation: (N, K, 3) coeffs, (N, 3) unit dirs -> (N, 3) RGB."""
    k = sh_coeff_count(degree)
    if sh_coeffs.shape[1] < k:
        raise ValueError("requested degree exceeds stored coefficients")
    basis = _sh_basis(view_dirs, degree)
    rgb = np.einsum("nk,nkc->nc", basis, sh_coeffs[:, :k, :]) + 0.5
    return np.clip(rgb, 0.0, 1.0)


def eval_sh_color(sh_coeffs: np.ndarray, view_dir: np.ndarray, degree: int) -> np.ndarray:
    """Single-point SH color with the conventional 0.5 offset, clamped to [0, 1]."""
    sh_coeffs = np.asarray(sh_coeffs, dtype=np.float64)
    view_dir = np.asarray(view_dir, dtype=np.float64)
    return eval_sh_colors(sh_coeffs[None], view_dir[None], degree)[0]


def rgb_to_dc(rgb) -> np.ndarray:
    """Degree-0 SH coefficient producing the given RGB under eval_sh_color."""
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0


# ---------------------------------------------------------------------------
# sky hemisphere cover
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SkyCoverParams:
    """Synthetic dome of Gaussians stabilizing sky color and depth."""

    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    radius: float = 100.0
    point_count: int = 2000
    color: tuple[float, float, float] = (0.78, 0.84, 0.92)
    opacity: float = 0.85

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        if self.center.shape != (3,):
            raise ValueError("center must be a 3-vector")
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")
        if self.point_count < 0:
            raise ValueError("point_count must be non-negative")
        if not 0.0 <= self.opacity <= 1.0:
            raise ValueError("opacity must lie in [0, 1]")


def add_sky_hemisphere(
    scene: GaussianScene, params: SkyCoverParams, rng_seed: int
) -> GaussianScene:
    """Append a dome of sky-flagged Gaussians on the upper hemisphere.

    Points are area-uniform on the half sphere z >= center.z; isotropic
    scale 2*radius/sqrt(point_count) keeps neighbouring dome splats
    overlapping. Deterministic under rng_seed.
    """
    n = params.point_count
    if n == 0:
        return scene
    if len(scene) > 0:
        max_dist = float(np.max(np.linalg.norm(scene.means - params.center, axis=1)))
        if params.radius <= max_dist:
            raise ValueError(
                f"sky radius {params.radius} must exceed scene extent {max_dist:.6g}"
            )
    rng = np.random.default_rng(rng_seed)
    z = rng.uniform(0.0, 1.0, n)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    r_xy = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    dirs = np.stack([r_xy * np.cos(phi), r_xy * np.sin(phi), z], axis=1)
    means = params.center[None, :] + params.radius * dirs

    sigma = 2.0 * params.radius / np.sqrt(n)
    scales = np.full((n, 3), sigma, dtype=np.float64)
    rotations = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1))
    opacities = np.full(n, params.opacity, dtype=np.float64)
    k = sh_coeff_count(scene.sh_degree)
    sh = np.zeros((n, k, 3), dtype=np.float64)
    sh[:, 0, :] = rgb_to_dc(params.color)
    sky = np.ones(n, dtype=bool)
    return scene.appended(means, scales, rotations, opacities, sh, sky)
