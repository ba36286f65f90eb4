import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from splatweather import (
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
from splatweather.scene import SH_C0, SH_C1, quat_from_axis_angle

from helpers import default_row, make_scene, random_scene, write_raw_splat_ply


# ---------------------------------------------------------------------------
# PLY loading
# ---------------------------------------------------------------------------

def test_load_opacity_logit_zero_maps_to_half(tmp_path):
    path = tmp_path / "one.ply"
    write_raw_splat_ply(path, [default_row(opacity=0.0)])
    scene = load_scene(path, sh_degree=0)
    assert scene.opacities[0] == pytest.approx(0.5, abs=1e-12)


def test_load_log_scale_zero_maps_to_one(tmp_path):
    path = tmp_path / "one.ply"
    write_raw_splat_ply(path, [default_row(scale_0=0.0)])
    scene = load_scene(path, sh_degree=0)
    assert scene.scales[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_load_bounds_match_handcrafted_fixture(tmp_path):
    # bounds derived by hand from the three means below
    rows = [
        default_row(x=1.0, y=2.0, z=3.0),
        default_row(x=-1.0, y=0.0, z=5.0),
        default_row(x=2.0, y=-2.0, z=4.0),
    ]
    path = tmp_path / "three.ply"
    write_raw_splat_ply(path, rows)
    scene = load_scene(path, sh_degree=0)
    np.testing.assert_allclose(scene.bounds.lo, [-1.0, -2.0, 3.0])
    np.testing.assert_allclose(scene.bounds.hi, [2.0, 2.0, 5.0])


def test_load_normalizes_quaternions(tmp_path):
    path = tmp_path / "one.ply"
    write_raw_splat_ply(path, [default_row(rot_0=2.0, rot_1=0.0)])
    scene = load_scene(path, sh_degree=0)
    assert np.linalg.norm(scene.rotations[0]) == pytest.approx(1.0, abs=1e-12)


def test_load_missing_property_names_it(tmp_path):
    path = tmp_path / "broken.ply"
    names = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
             "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2"]
    header = ["ply", "format binary_little_endian 1.0", "element vertex 1"]
    header += [f"property float {n}" for n in names]
    header.append("end_header")
    payload = np.zeros(len(names), dtype="<f4").tobytes()
    path.write_bytes(("\n".join(header) + "\n").encode() + payload)
    with pytest.raises(SceneFormatError, match="rot_3"):
        load_scene(path, sh_degree=0)


def test_load_nonfinite_reports_element_index(tmp_path):
    path = tmp_path / "nan.ply"
    write_raw_splat_ply(path, [default_row(), default_row(x=float("nan"))])
    with pytest.raises(SceneDataError, match="element 1"):
        load_scene(path, sh_degree=0)


def test_load_ignores_extra_properties(tmp_path):
    path = tmp_path / "extra.ply"
    write_raw_splat_ply(
        path, [default_row(nx=1.0, x=3.0)], extra_props=("nx", "ny", "nz")
    )
    scene = load_scene(path, sh_degree=0)
    assert scene.means[0, 0] == pytest.approx(3.0)


def test_roundtrip_is_value_identical(tmp_path):
    rng = np.random.default_rng(7)
    scene = random_scene(rng, 20)
    first = tmp_path / "a.ply"
    second = tmp_path / "b.ply"
    save_scene(scene, first)
    loaded = load_scene(first, sh_degree=0)
    # float32 storage bounds the fidelity of the transformed fields
    np.testing.assert_allclose(loaded.means, scene.means, rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(loaded.scales, scene.scales, rtol=1e-5)
    np.testing.assert_allclose(loaded.opacities, scene.opacities, rtol=1e-5)
    np.testing.assert_allclose(loaded.rotations, scene.rotations, rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(loaded.sh_coeffs, scene.sh_coeffs, rtol=1e-5, atol=1e-6)
    # a second cycle reproduces the file bit for bit
    save_scene(loaded, second)
    reloaded = load_scene(second, sh_degree=0)
    np.testing.assert_array_equal(reloaded.means, loaded.means)
    np.testing.assert_array_equal(reloaded.scales, loaded.scales)
    np.testing.assert_array_equal(reloaded.opacities, loaded.opacities)
    np.testing.assert_array_equal(reloaded.sh_coeffs, loaded.sh_coeffs)


def test_roundtrip_higher_degree(tmp_path):
    rng = np.random.default_rng(11)
    n, k = 5, 16
    sh = rng.normal(scale=0.2, size=(n, k, 3))
    base = random_scene(rng, n)
    scene = GaussianScene(
        base.means, base.scales, base.rotations, base.opacities, sh, sh_degree=3
    )
    path = tmp_path / "deg3.ply"
    save_scene(scene, path)
    loaded = load_scene(path, sh_degree=3)
    np.testing.assert_allclose(loaded.sh_coeffs, scene.sh_coeffs, rtol=1e-5, atol=1e-6)


# ---------------------------------------------------------------------------
# covariance
# ---------------------------------------------------------------------------

def test_covariance_identity():
    cov = covariance_3d(np.ones(3), np.array([1.0, 0, 0, 0]))
    np.testing.assert_allclose(cov, np.eye(3), atol=1e-15)


def test_covariance_axis_scaling():
    cov = covariance_3d(np.array([2.0, 1.0, 1.0]), np.array([1.0, 0, 0, 0]))
    np.testing.assert_allclose(cov, np.diag([4.0, 1.0, 1.0]), atol=1e-15)


def test_covariance_rotated_matches_independent_matrix_route():
    quat = quat_from_axis_angle([0.0, 0.0, 1.0], math.pi / 2.0)
    cov = covariance_3d(np.array([2.0, 1.0, 1.0]), quat)
    rot = Rotation.from_euler("z", 90, degrees=True).as_matrix()
    expected = rot @ np.diag([4.0, 1.0, 1.0]) @ rot.T
    np.testing.assert_allclose(cov, expected, atol=1e-12)
    np.testing.assert_allclose(cov, np.diag([1.0, 4.0, 1.0]), atol=1e-12)


def test_covariance_rejects_nonpositive_scale():
    with pytest.raises(ValueError):
        covariance_3d(np.array([1.0, 0.0, 1.0]), np.array([1.0, 0, 0, 0]))


def test_covariance_random_properties():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        scale = np.exp(rng.uniform(-2.0, 1.5, 3))
        quat = rng.normal(size=4)
        quat /= np.linalg.norm(quat)
        cov = covariance_3d(scale, quat)
        assert np.max(np.abs(cov - cov.T)) <= 1e-12
        eigvals = np.linalg.eigvalsh(cov)
        np.testing.assert_allclose(
            np.sort(eigvals), np.sort(scale**2), rtol=1e-9, atol=1e-12
        )


def test_shortest_axis_is_min_eigenvector():
    rng = np.random.default_rng(4)
    for _ in range(200):
        scale = np.exp(rng.uniform(-2.0, 1.0, 3))
        quat = rng.normal(size=4)
        quat /= np.linalg.norm(quat)
        scene = make_scene([[0.0, 0.0, 0.0]], scales=scale, rotations=quat)
        g = scene.gaussian(0)
        n = shortest_axis_normal(g)
        cov = covariance_3d(scale, quat)
        lam_min = np.min(np.linalg.eigvalsh(cov))
        assert np.linalg.norm(cov @ n - lam_min * n) <= 1e-9


# ---------------------------------------------------------------------------
# shortest-axis normals
# ---------------------------------------------------------------------------

def test_shortest_axis_examples():
    g = make_scene([[0, 0, 0]], scales=[1.0, 1.0, 0.1]).gaussian(0)
    np.testing.assert_allclose(shortest_axis_normal(g), [0.0, 0.0, 1.0], atol=1e-12)

    g = make_scene([[0, 0, 0]], scales=[0.1, 1.0, 1.0]).gaussian(0)
    np.testing.assert_allclose(shortest_axis_normal(g), [1.0, 0.0, 0.0], atol=1e-12)


def test_shortest_axis_rotated_matches_quaternion_route():
    quat = quat_from_axis_angle([1.0, 0.0, 0.0], math.pi / 2.0)
    g = make_scene([[0, 0, 0]], scales=[1.0, 1.0, 0.1], rotations=quat).gaussian(0)
    n = shortest_axis_normal(g)
    expected = Rotation.from_quat([quat[1], quat[2], quat[3], quat[0]]).apply([0, 0, 1.0])
    assert min(np.linalg.norm(n - expected), np.linalg.norm(n + expected)) <= 1e-9


def test_shortest_axis_tie_breaks_to_lowest_index():
    g = make_scene([[0, 0, 0]], scales=[0.1, 0.1, 1.0]).gaussian(0)
    np.testing.assert_allclose(shortest_axis_normal(g), [1.0, 0.0, 0.0], atol=1e-12)


def test_shortest_axis_faces_camera():
    g = make_scene([[0, 0, 0]], scales=[1.0, 1.0, 0.1]).gaussian(0)
    above = shortest_axis_normal(g, view_point=np.array([0.0, 0.0, 5.0]))
    below = shortest_axis_normal(g, view_point=np.array([0.0, 0.0, -5.0]))
    np.testing.assert_allclose(above, [0, 0, 1.0], atol=1e-12)
    np.testing.assert_allclose(below, [0, 0, -1.0], atol=1e-12)


# ---------------------------------------------------------------------------
# sky hemisphere
# ---------------------------------------------------------------------------

def _dome_params(**overrides):
    params = dict(center=np.zeros(3), radius=100.0, point_count=1000)
    params.update(overrides)
    return SkyCoverParams(**params)


def test_sky_zero_points_returns_scene_unchanged():
    scene = make_scene([[0, 0, 5]])
    assert add_sky_hemisphere(scene, _dome_params(point_count=0), 0) is scene


def test_sky_points_lie_on_upper_hemisphere():
    scene = make_scene([[0, 0, 5]])
    out = add_sky_hemisphere(scene, _dome_params(), rng_seed=9)
    added = out.means[len(scene):]
    radii = np.linalg.norm(added, axis=1)
    np.testing.assert_allclose(radii, 100.0, atol=1e-9)
    assert np.all(added[:, 2] >= 0.0)
    assert np.all(out.sky_flags[len(scene):])
    assert not out.sky_flags[0]


def test_sky_same_seed_is_bit_identical():
    scene = make_scene([[0, 0, 5]])
    a = add_sky_hemisphere(scene, _dome_params(), rng_seed=3)
    b = add_sky_hemisphere(scene, _dome_params(), rng_seed=3)
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.scales, b.scales)


def test_sky_radius_must_exceed_scene_extent():
    scene = make_scene([[0, 0, 200.0]])
    with pytest.raises(ValueError, match="radius"):
        add_sky_hemisphere(scene, _dome_params(), 0)


def test_scene_is_immutable():
    scene = make_scene([[0, 0, 5]])
    with pytest.raises(ValueError):
        scene.means[0, 0] = 1.0


# ---------------------------------------------------------------------------
# spherical harmonics
# ---------------------------------------------------------------------------

def test_sh_degree0_formula():
    coeffs = np.array([[0.7, -0.2, 0.1]])
    rgb = eval_sh_color(coeffs, np.array([0.0, 0.0, 1.0]), degree=0)
    expected = np.clip(SH_C0 * coeffs[0] + 0.5, 0.0, 1.0)
    np.testing.assert_allclose(rgb, expected, atol=1e-12)


def test_sh_all_zero_is_mid_gray():
    rgb = eval_sh_color(np.zeros((4, 3)), np.array([1.0, 0.0, 0.0]), degree=1)
    np.testing.assert_allclose(rgb, [0.5, 0.5, 0.5], atol=1e-15)


def test_sh_opposite_dirs_differ_by_twice_degree1_term():
    rng = np.random.default_rng(5)
    coeffs = rng.normal(scale=0.05, size=(4, 3))
    d = np.array([0.3, -0.5, 0.81])
    d /= np.linalg.norm(d)
    a = eval_sh_color(coeffs, d, degree=1)
    b = eval_sh_color(coeffs, -d, degree=1)
    # independent basis evaluation of the odd (degree 1) bands
    basis1 = np.array([-SH_C1 * d[1], SH_C1 * d[2], -SH_C1 * d[0]])
    expected = 2.0 * basis1 @ coeffs[1:4]
    np.testing.assert_allclose(a - b, expected, atol=1e-12)


def test_sh_clamps_to_unit_interval():
    coeffs = np.array([[10.0, -10.0, 0.0]])
    rgb = eval_sh_color(coeffs, np.array([0.0, 0.0, 1.0]), degree=0)
    np.testing.assert_allclose(rgb, [1.0, 0.0, 0.5], atol=1e-12)
