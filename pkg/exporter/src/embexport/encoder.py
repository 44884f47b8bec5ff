"""Encoder backends.

An encoder is any callable taking a float32 batch (B, 3, 1024, 1024) of
preprocessed images and returning float32 embeddings (B, 256, 64, 64).
The production backend loads a ViT-B Segment Anything checkpoint through
the segment-anything package (optional dependency); tests inject a stub.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ExportError

EncoderFn = Callable[[np.ndarray], np.ndarray]


def load_checkpoint_encoder(checkpoint_path: str | Path) -> EncoderFn:
    """Wrap the ViT-B image encoder from an official checkpoint."""
    checkpoint_path = Path(checkpoint_path)
    if not checkpoint_path.is_file():
        raise ExportError(f"checkpoint not found: {checkpoint_path}")
    try:
        import torch
        from segment_anything import sam_model_registry
    except ImportError as exc:
        raise ExportError(
            "torch and segment-anything are required to load a checkpoint; "
            "install the 'sam' extra"
        ) from exc
    try:
        sam = sam_model_registry["vit_b"](checkpoint=str(checkpoint_path))
    except Exception as exc:
        raise ExportError(f"cannot load checkpoint {checkpoint_path}: {exc}") from exc
    sam.eval()

    def encode(batch: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            tensor = torch.from_numpy(np.ascontiguousarray(batch, dtype=np.float32))
            return sam.image_encoder(tensor).numpy()

    return encode
