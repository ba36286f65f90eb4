"""Frame export and reference-map ingestion (PNG, PPM, raw float32)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def srgb_encode(linear: np.ndarray) -> np.ndarray:
    """Standard linear-to-sRGB transfer on values in [0, 1]."""
    linear = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    low = linear * 12.92
    high = 1.055 * np.power(linear, 1.0 / 2.4) - 0.055
    return np.where(linear <= 0.0031308, low, high)


def save_png_rgb(path: str | Path, rgb: np.ndarray) -> None:
    """8-bit sRGB-encoded PNG; input is linear RGB in [0, 1]."""
    encoded = np.round(srgb_encode(rgb) * 255.0).astype(np.uint8)
    Image.fromarray(encoded, mode="RGB").save(str(path))


def save_png_gray16(path: str | Path, values: np.ndarray) -> None:
    """16-bit grayscale PNG of values in [0, 1] (e.g. normalized depth)."""
    scaled = np.round(np.clip(values, 0.0, 1.0) * 65535.0).astype(np.uint16)
    Image.fromarray(scaled).save(str(path))


def load_png_gray16(path: str | Path) -> np.ndarray:
    """Inverse of save_png_gray16: returns float64 values in [0, 1]."""
    img = Image.open(str(path))
    return np.asarray(img, dtype=np.float64) / 65535.0


def load_png_mask(path: str | Path) -> np.ndarray:
    """Boolean mask from any single-channel PNG: nonzero pixels are True."""
    img = Image.open(str(path)).convert("L")
    return np.asarray(img) > 0


def save_ppm(path: str | Path, rgb: np.ndarray) -> None:
    """Binary P6 PPM, 8-bit sRGB-encoded."""
    encoded = np.round(srgb_encode(rgb) * 255.0).astype(np.uint8)
    h, w = encoded.shape[:2]
    with open(path, "wb") as handle:
        handle.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        handle.write(encoded.tobytes())


def save_raw_f32(path: str | Path, values: np.ndarray) -> None:
    """Little-endian float32 dump, C order, no header."""
    np.asarray(values, dtype="<f4").tofile(str(path))


def load_raw_f32(path: str | Path, shape: tuple[int, ...]) -> np.ndarray:
    data = np.fromfile(str(path), dtype="<f4")
    return data.reshape(shape).astype(np.float64)
