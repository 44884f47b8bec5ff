import numpy as np
from PIL import Image


def write_rgb_image(path, height, width, seed=0):
    rng = np.random.default_rng(seed)
    values = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    Image.fromarray(values, "RGB").save(path)
    return values


def write_gray_mask(path, height, width, seed=0):
    rng = np.random.default_rng(seed)
    values = np.where(rng.random((height, width)) < 0.4, 255, 0).astype(np.uint8)
    Image.fromarray(values, "L").save(path)
    return values
