"""Output writers: SPEB embedding files, verified mask copies, JSON manifest.

The SPEB layout (little-endian): magic ``SPEB``, u32 version=1, u32
channels, u32 height, u32 width, then channels*height*width float32 values
channel-major. Written byte-for-byte to the consumer's documented format.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ExportError
from .geometry import ExportGeometry

SPEB_MAGIC = b"SPEB"
SPEB_VERSION = 1
_HEADER = struct.Struct("<4sIIII")

EMBED_SHAPE = (256, 64, 64)


def write_speb(values: np.ndarray, path: str | Path) -> None:
    values = np.asarray(values)
    if values.shape != EMBED_SHAPE:
        raise ExportError(f"embedding must be {EMBED_SHAPE}, got {values.shape}")
    if not np.isfinite(values).all():
        raise ExportError(f"refusing to write non-finite embedding to {path}")
    header = _HEADER.pack(SPEB_MAGIC, SPEB_VERSION, *EMBED_SHAPE)
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def copy_mask(src: str | Path, dst: str | Path, image_shape: tuple[int, int]) -> None:
    """Copy a ground-truth mask, verifying geometry; never resizes or binarizes.

    The consumer's loader accepts only 8-bit single-channel grayscale PNG,
    so other encodings are converted channel-wise to grayscale in place.
    """
    src, dst = Path(src), Path(dst)
    try:
        with Image.open(src) as img:
            if img.size != (image_shape[1], image_shape[0]):
                raise ExportError(
                    f"mask {src} is {img.size[1]}x{img.size[0]} but its image is "
                    f"{image_shape[0]}x{image_shape[1]}"
                )
            if img.mode == "L" and src.suffix.lower() == ".png":
                dst.write_bytes(src.read_bytes())
            else:
                img.convert("L").save(dst, format="PNG")
    except (OSError, UnidentifiedImageError) as exc:
        raise ExportError(f"cannot read mask {src}: {exc}") from exc


def write_manifest(entries: list[dict], path: str | Path) -> None:
    Path(path).write_text(json.dumps({"entries": entries}, indent=2) + "\n", encoding="utf-8")


def manifest_entry(
    sample_id: str,
    embedding_name: str,
    mask_name: str,
    geometry: ExportGeometry,
) -> dict:
    """One manifest entry; geometry extras let consumers cross-check alignment."""
    return {
        "id": sample_id,
        "embedding_path": embedding_name,
        "mask_path": mask_name,
        "original_height": geometry.original_height,
        "original_width": geometry.original_width,
        "resized_height": geometry.resized_height,
        "resized_width": geometry.resized_width,
        "scale": geometry.scale,
    }
