import math

import numpy as np
import pytest

from splatweather import (
    AABB,
    ParticleParams,
    StaticWeatherParams,
    advance,
    composite_fall,
    luminance_factor,
    luminance_map,
    occlusion_mask,
    rain_preset,
    rasterize,
    render_fall_frame,
    sky_luminance,
    snow_preset,
    spawn_particles,
)
from splatweather.scene import quat_to_matrix

from helpers import forward_camera, make_scene

BOX = AABB(np.array([-2.0, -2.0, 0.0]), np.array([2.0, 2.0, 4.0]))


def _params(kind, count, **overrides) -> ParticleParams:
    preset = rain_preset if kind == "rain" else snow_preset
    return preset(BOX, count=count, **overrides)


def _long_axes(layer):
    rots = quat_to_matrix(layer.scene.rotations)
    longest = np.argmax(layer.scene.scales, axis=1)
    return rots[np.arange(len(layer.scene)), :, longest]


# ---------------------------------------------------------------------------
# spawning
# ---------------------------------------------------------------------------

def test_partition_sizes_follow_ceiling_rule():
    layers = spawn_particles(_params("rain", 10, max_per_layer=4))
    assert [layer.particle_count() for layer in layers] == [4, 4, 2]
    seen = np.concatenate([np.unique(layer.particle_index) for layer in layers])
    np.testing.assert_array_equal(np.sort(seen), np.arange(10))


def test_zero_count_spawns_nothing():
    assert spawn_particles(_params("rain", 0)) == []


def test_snowflake_is_three_coplanar_arms_at_sixty_degrees():
    layers = spawn_particles(_params("snow", 1))
    assert len(layers) == 1
    layer = layers[0]
    assert len(layer.scene) == 3
    np.testing.assert_array_equal(layer.scene.means, np.tile(layer.scene.means[:1], (3, 1)))
    axes = _long_axes(layer)
    for i in range(3):
        for j in range(i + 1, 3):
            angle = math.acos(min(1.0, abs(float(axes[i] @ axes[j]))))
            assert abs(angle - math.pi / 3.0) <= 1e-6
    plane_normal = np.cross(axes[0], axes[1])
    plane_normal /= np.linalg.norm(plane_normal)
    assert abs(float(axes[2] @ plane_normal)) <= 1e-9


def test_raindrops_align_with_velocity():
    params = _params("rain", 20, velocity=(0.0, 0.0, -10.0))
    axes = np.concatenate([_long_axes(l) for l in spawn_particles(params)])
    dots = np.abs(axes @ np.array([0.0, 0.0, -1.0]))
    np.testing.assert_allclose(dots, 1.0, atol=1e-6)

    slanted = _params("rain", 5, velocity=(3.0, 0.0, -4.0))
    axes = np.concatenate([_long_axes(l) for l in spawn_particles(slanted)])
    dots = np.abs(axes @ np.array([0.6, 0.0, -0.8]))
    np.testing.assert_allclose(dots, 1.0, atol=1e-6)


def test_spawn_is_deterministic_and_inside_bounds():
    a = spawn_particles(_params("snow", 50, rng_seed=5))
    b = spawn_particles(_params("snow", 50, rng_seed=5))
    for la, lb in zip(a, b):
        np.testing.assert_array_equal(la.scene.means, lb.scene.means)
        np.testing.assert_array_equal(la.scene.rotations, lb.scene.rotations)
        assert BOX.contains(la.scene.means)


def test_rain_requires_nonzero_velocity():
    with pytest.raises(ValueError):
        spawn_particles(_params("rain", 2, velocity=(0.0, 0.0, 0.0)))


# ---------------------------------------------------------------------------
# temporal advance
# ---------------------------------------------------------------------------

def test_advance_zero_dt_is_identity():
    layers = spawn_particles(_params("snow", 10))
    moved = advance(layers, 0.0)
    for before, after in zip(layers, moved):
        np.testing.assert_array_equal(before.scene.means, after.scene.means)


def test_advance_translates_by_velocity():
    params = _params("rain", 8, velocity=(0.0, 0.0, -2.0))
    layers = spawn_particles(params)
    moved = advance(layers, 0.5)
    for before, after in zip(layers, moved):
        delta = after.scene.means - before.scene.means
        span = BOX.hi[2] - BOX.lo[2]
        dz = delta[:, 2]
        assert np.all(np.isclose(dz, -1.0) | np.isclose(dz, -1.0 + span))


def test_advance_is_additive_without_wrap():
    params = _params("rain", 6, velocity=(0.0, 0.0, -0.01))
    layers = spawn_particles(params)
    once = advance(advance(layers, 0.125), 0.25)
    combined = advance(layers, 0.375)
    for a, b in zip(once, combined):
        np.testing.assert_array_equal(a.scene.means, b.scene.means)


def test_advance_wraps_bottom_to_top_preserving_xy():
    params = _params("rain", 12, velocity=(0.0, 0.0, -1.0))
    layers = spawn_particles(params)
    horizon = advance(layers, 100.25)
    for before, after in zip(layers, horizon):
        assert BOX.contains(after.scene.means, atol=1e-9)
        np.testing.assert_allclose(
            after.scene.means[:, :2], before.scene.means[:, :2], atol=1e-9
        )


def test_world_tracks_are_linear_modulo_wrap():
    params = _params("snow", 10, velocity=(0.3, -0.2, -1.1))
    layers = spawn_particles(params)
    state = layers
    for _ in range(16):
        state = advance(state, 1.0 / 24.0)
    for base, now in zip(layers, state):
        span = BOX.hi - BOX.lo
        expected = base.base_means + now.velocity[None, :] * now.elapsed
        expected = BOX.lo + np.mod(expected - BOX.lo, span)
        np.testing.assert_array_equal(now.scene.means, expected)


# ---------------------------------------------------------------------------
# luminance machinery
# ---------------------------------------------------------------------------

def test_luminance_map_is_channel_mean():
    rgb = np.array([[[1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [0.3, 0.6, 0.9]]])
    np.testing.assert_allclose(luminance_map(rgb), [[1.0, 0.0, 0.6]], atol=1e-12)


def test_sky_luminance_masked_mean_and_fallback():
    lum = np.array([[1.0, 1.0], [0.5, 0.5]])
    mask = np.array([[True, True], [False, False]])
    value, fallback = sky_luminance(lum, mask)
    assert (value, fallback) == (1.0, False)

    half = np.array([[True, False], [True, False]])
    assert sky_luminance(lum, half)[0] == pytest.approx(0.75)

    value, fallback = sky_luminance(lum, np.zeros((2, 2), dtype=bool))
    assert fallback and value == pytest.approx(lum.mean())


def test_luminance_factor_zero_point_and_clamps():
    lum = np.array([[0.5]])
    assert luminance_factor(0.5, lum, -0.1, 0.6)[0, 0] == 0.0
    # upper clamp: big sky-vs-pixel gap saturates at t_max
    dark = np.array([[0.0]])
    assert luminance_factor(2.0, dark, -0.1, 0.6)[0, 0] == pytest.approx(
        math.exp(0.6) - 1.0, abs=1e-12
    )
    # lower clamp at the snowflake preset's negative t_min
    bright = np.array([[1.0]])
    assert luminance_factor(0.2, bright, -0.1, 0.6)[0, 0] == pytest.approx(
        math.exp(-0.1) - 1.0, abs=1e-12
    )


def test_luminance_factor_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        luminance_factor(0.5, np.zeros((2, 2)), 0.5, -0.5)


def test_occlusion_mask_conjuncts():
    bright = np.full((1, 1, 3), 0.7)
    dim = np.full((1, 1, 3), 0.05)
    # in front of the wall, near, bright
    assert occlusion_mask(np.array([[0.3]]), np.array([[0.5]]), 0.8, bright, 0.1)[0, 0]
    # behind the wall
    assert not occlusion_mask(np.array([[0.5]]), np.array([[0.3]]), 0.8, bright, 0.1)[0, 0]
    # beyond the distance threshold although unoccluded
    assert not occlusion_mask(np.array([[0.9]]), np.array([[0.95]]), 0.8, bright, 0.1)[0, 0]
    # too dim
    assert not occlusion_mask(np.array([[0.3]]), np.array([[0.5]]), 0.8, dim, 0.1)[0, 0]


# ---------------------------------------------------------------------------
# compositing
# ---------------------------------------------------------------------------

def _fall_params(**overrides):
    return _params("snow", 1, **overrides)


def test_composite_zero_layers_is_identity():
    rng = np.random.default_rng(0)
    rgb = rng.uniform(0, 1, (4, 4, 3))
    out = composite_fall(rgb, np.full((4, 4), 0.5), np.zeros((4, 4), bool), [], _fall_params())
    np.testing.assert_array_equal(out, rgb)


def test_composite_fully_occluded_layer_is_identity():
    rng = np.random.default_rng(1)
    rgb = rng.uniform(0, 1, (4, 4, 3))
    scene_depth = np.full((4, 4), 0.2)
    noise = (np.full((4, 4, 3), 0.9), np.full((4, 4), 0.6))  # behind everything
    out = composite_fall(rgb, scene_depth, np.zeros((4, 4), bool), [noise], _fall_params())
    np.testing.assert_array_equal(out, rgb)


def test_composite_two_layers_hand_evaluated():
    # 4x4 fixture: sky strip luminance ln(2), dark elsewhere, so the
    # factor is exactly exp(ln 2) - 1 = 1 at dark pixels
    ln2 = math.log(2.0)
    rgb = np.zeros((4, 4, 3))
    rgb[0, :, :] = ln2
    sky = np.zeros((4, 4), dtype=bool)
    sky[0, :] = True
    scene_depth = np.full((4, 4), 0.9)

    layer_a_rgb = np.zeros((4, 4, 3))
    layer_a_rgb[2, 1] = (0.5, 0.4, 0.3)
    layer_a_depth = np.ones((4, 4))
    layer_a_depth[2, 1] = 0.3
    layer_b_rgb = np.zeros((4, 4, 3))
    layer_b_rgb[3, 2] = (0.2, 0.2, 0.6)
    layer_b_depth = np.ones((4, 4))
    layer_b_depth[3, 2] = 0.4

    params = _fall_params(t_min=-0.1, t_max=1.0, t_d=0.8, t_c=0.1)
    out = composite_fall(
        rgb, scene_depth, sky,
        [(layer_a_rgb, layer_a_depth), (layer_b_rgb, layer_b_depth)], params,
    )
    expected = rgb.copy()
    expected[2, 1] += (0.5, 0.4, 0.3)
    expected[3, 2] += (0.2, 0.2, 0.6)
    np.testing.assert_allclose(out, np.clip(expected, 0, 1), atol=1e-12)


def test_composite_output_stays_in_unit_interval():
    rng = np.random.default_rng(2)
    params = _fall_params(t_min=-0.2, t_max=2.0)
    for _ in range(10):
        rgb = rng.uniform(0, 1, (6, 6, 3))
        layers = [
            (rng.uniform(0, 1, (6, 6, 3)), rng.uniform(0, 1, (6, 6)))
            for _ in range(3)
        ]
        out = composite_fall(
            rgb, rng.uniform(0, 1, (6, 6)), rng.uniform(0, 1, (6, 6)) > 0.5,
            layers, params,
        )
        assert out.min() >= 0.0 and out.max() <= 1.0


# ---------------------------------------------------------------------------
# frame rendering
# ---------------------------------------------------------------------------

def _wall_scene():
    xs, ys = np.meshgrid(np.linspace(-1.5, 1.5, 12), np.linspace(-1.5, 1.5, 12))
    means = np.stack([xs.ravel(), ys.ravel(), np.full(xs.size, 3.0)], axis=1)
    return make_scene(means, scales=[0.2, 0.2, 0.02], opacities=1.0, colors=(0.4, 0.45, 0.5))


def test_render_fall_frame_no_particles_matches_plain_render():
    scene = _wall_scene()
    cam = forward_camera()
    params = _fall_params()
    plain = rasterize(scene, cam, d_max=6.0)
    frame = render_fall_frame(scene, cam, [], params, d_max=6.0)
    np.testing.assert_array_equal(frame, plain.rgb)


def test_render_fall_frame_particles_behind_wall_are_invisible():
    scene = _wall_scene()
    cam = forward_camera()
    behind = AABB(np.array([-1.0, -1.0, 4.0]), np.array([1.0, 1.0, 5.0]))
    params = snow_preset(behind, count=40, rng_seed=3, size=0.05)
    layers = spawn_particles(params)
    plain = rasterize(scene, cam, d_max=6.0)
    frame = render_fall_frame(scene, cam, layers, params, d_max=6.0)
    np.testing.assert_array_equal(frame, plain.rgb)


def test_render_fall_frame_is_deterministic():
    scene = _wall_scene()
    cam = forward_camera()
    inside = AABB(np.array([-1.0, -1.0, 1.0]), np.array([1.0, 1.0, 2.5]))
    params = snow_preset(inside, count=30, rng_seed=7)
    layers = advance(spawn_particles(params), 0.25)
    fog = StaticWeatherParams((0.8, 0.8, 0.85), 0.4)
    a = render_fall_frame(scene, cam, layers, params, fog, d_max=6.0)
    b = render_fall_frame(scene, cam, layers, params, fog, d_max=6.0)
    np.testing.assert_array_equal(a, b)
    # and the particles actually show up in front of the wall
    plain = rasterize(scene, cam, d_max=6.0)
    assert np.max(np.abs(a - plain.rgb)) > 0.01


def test_sublayer_split_never_hides_particles():
    # two particles sharing a pixel column, occluder between them
    scene = _wall_scene()  # wall at z=3 -> depth_ref 0.5 with d_max 6
    cam = forward_camera()
    box = AABB(np.array([-1.0, -1.0, 1.0]), np.array([1.0, 1.0, 5.0]))

    def visible_pixels(max_per_layer):
        params = snow_preset(
            box, count=12, rng_seed=11, size=0.1, opacity=0.5,
            max_per_layer=max_per_layer, t_c=0.05, t_d=0.95,
        )
        layers = spawn_particles(params)
        plain = rasterize(scene, cam, d_max=6.0)
        frame = render_fall_frame(scene, cam, layers, params, d_max=6.0)
        return int(np.count_nonzero(np.any(frame != plain.rgb, axis=-1)))

    assert visible_pixels(1) >= visible_pixels(12)
