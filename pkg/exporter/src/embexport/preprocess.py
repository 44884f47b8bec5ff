"""Image preprocessing matching the encoder's expected input.

RGB image -> bilinear resize (longest side 1024, antialiased, the PIL
resampler the reference preprocessing uses) -> per-channel normalization ->
zero-pad bottom-right to 1024x1024. Output is float32 (3, 1024, 1024).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ExportError
from .geometry import PADDED_SIZE, ExportGeometry

PIXEL_MEAN = np.array([123.675, 116.28, 103.53], dtype=np.float32)
PIXEL_STD = np.array([58.395, 57.12, 57.375], dtype=np.float32)


def load_image(path: str | Path) -> np.ndarray:
    """Decode to RGB uint8 (H, W, 3)."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (OSError, UnidentifiedImageError) as exc:
        raise ExportError(f"cannot read image {path}: {exc}") from exc


def preprocess_image(image: np.ndarray) -> tuple[np.ndarray, ExportGeometry]:
    """Resize, normalize, and pad one RGB image for the encoder."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ExportError(f"expected an RGB image, got shape {image.shape}")
    height, width = image.shape[:2]
    geometry = ExportGeometry.from_original(height, width)
    resized = Image.fromarray(image).resize(
        (geometry.resized_width, geometry.resized_height), Image.BILINEAR
    )
    values = np.asarray(resized, dtype=np.float32)
    values = (values - PIXEL_MEAN) / PIXEL_STD
    padded = np.zeros((PADDED_SIZE, PADDED_SIZE, 3), dtype=np.float32)
    padded[: geometry.resized_height, : geometry.resized_width] = values
    return padded.transpose(2, 0, 1), geometry
