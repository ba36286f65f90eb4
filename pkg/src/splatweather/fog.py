"""Depth-driven fog, haze and smog as a post-process over rendered frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StaticWeatherParams:
    """Color and global intensity of a depth-exponential blurring effect.

    Fog, haze and smog are all this operator with different settings;
    there are no per-weather branches.
    """

    fog_color: tuple[float, float, float] = (0.9, 0.9, 0.92)
    intensity: float = 1.0

    def __post_init__(self):
        if self.intensity < 0.0:
            raise ValueError("intensity must be non-negative")
        if len(self.fog_color) != 3 or not all(0.0 <= c <= 1.0 for c in self.fog_color):
            raise ValueError("fog_color must be three values in [0, 1]")


STATIC_PRESETS = {
    "fog": StaticWeatherParams((0.92, 0.93, 0.95), 2.5),
    "haze": StaticWeatherParams((0.75, 0.78, 0.82), 0.6),
    "smog": StaticWeatherParams((0.72, 0.68, 0.52), 1.2),
}


def fog_alpha(depth_ref: np.ndarray, intensity: float) -> np.ndarray:
    """Per-pixel blend weight min(1, 1 - exp(-intensity * depth_ref))."""
    if intensity < 0.0:
        raise ValueError("intensity must be non-negative")
    depth_ref = np.asarray(depth_ref, dtype=np.float64)
    return np.minimum(1.0, 1.0 - np.exp(-intensity * depth_ref))


def apply_static(
    rgb: np.ndarray, depth_ref: np.ndarray, params: StaticWeatherParams
) -> np.ndarray:
    """Blend the frame toward the fog color by the depth-based coefficient."""
    rgb = np.asarray(rgb, dtype=np.float64)
    depth_ref = np.asarray(depth_ref, dtype=np.float64)
    if rgb.shape[:2] != depth_ref.shape:
        raise ValueError("rgb and depth_ref dimensions do not match")
    alpha = fog_alpha(depth_ref, params.intensity)[..., None]
    fog = np.asarray(params.fog_color, dtype=np.float64)
    return fog * alpha + rgb * (1.0 - alpha)
