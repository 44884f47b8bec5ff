import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import write_gray_mask, write_rgb_image  # noqa: E402


@pytest.fixture()
def stub_encoder():
    """Deterministic stand-in encoder: 16x16 average pooling of the
    preprocessed planes, projected from 3 to 256 channels by a fixed
    seeded matrix."""
    projection = np.random.default_rng(1234).standard_normal((256, 3)).astype(np.float32)

    def encode(batch: np.ndarray) -> np.ndarray:
        b, c, h, w = batch.shape
        pooled = batch.reshape(b, c, 64, h // 64, 64, w // 64).mean(axis=(3, 5))
        return np.einsum("oc,bcyx->boyx", projection, pooled).astype(np.float32)

    return encode


@pytest.fixture()
def paired_dataset(tmp_path):
    """Three image/mask pairs with assorted sizes."""
    images = tmp_path / "images"
    masks = tmp_path / "masks"
    images.mkdir()
    masks.mkdir()
    sizes = [(96, 128), (120, 120), (64, 180)]
    for index, (height, width) in enumerate(sizes):
        write_rgb_image(images / f"case{index}.png", height, width, seed=index)
        write_gray_mask(masks / f"case{index}.png", height, width, seed=100 + index)
    return images, masks, sizes
