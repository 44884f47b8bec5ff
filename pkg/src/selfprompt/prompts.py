"""Turn a coarse 64x64 prediction into decoder prompts.

Pipeline: bilinearly upsample the probability grid to 256x256 and threshold,
clean the mask with iterated erosion/dilation (5x5 square kernel, 3 then 5
iterations by default), then derive a location point (argmax of the exact
Euclidean distance transform) and a bounding box (tight extremes, optionally
perturbed outward by 0-20 px per side).

Grid-256 coordinates map to padded-1024 space as 4 * c + 2, the center of
each cell's 4x4 pixel footprint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import BinaryMask, CoordSpace, ProbabilityGrid, PromptBox, PromptMode, PromptPoint, PromptSet
from .errors import EmptyMaskError, ShapeError
from .rng import SplitMix64
from .resample import bilinear_resize

UPSAMPLED_SIZE = 256


def full_square_kernel(size: int = 5) -> np.ndarray:
    if size < 1 or size % 2 == 0:
        raise ShapeError(f"kernel size must be odd and positive, got {size}")
    return np.ones((size, size), dtype=bool)


@dataclass(frozen=True, eq=False)
class MorphConfig:
    kernel: np.ndarray = field(default_factory=full_square_kernel)
    erosion_iterations: int = 3
    dilation_iterations: int = 5

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=bool)
        if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
            raise ShapeError(f"structuring element must be 2-D with odd sides, got {k.shape}")
        object.__setattr__(self, "kernel", k)
        if self.erosion_iterations < 0 or self.dilation_iterations < 0:
            raise ShapeError("morphology iteration counts must be >= 0")


@dataclass(frozen=True)
class PerturbConfig:
    max_pixels: int = 20
    seed: int = 0
    enabled: bool = True

    def __post_init__(self):
        if self.max_pixels < 0:
            raise ShapeError("max_pixels must be >= 0")


def upsample_mask(probs: ProbabilityGrid) -> BinaryMask:
    """64x64 probabilities -> 256x256 mask via bilinear resize and strict > 0.5."""
    if probs.values.shape != (64, 64) or probs.space is not CoordSpace.GRID_64:
        raise ShapeError(
            f"expected a 64x64 grid-64 probability grid, got {probs.values.shape} "
            f"in {probs.space.value}"
        )
    resized = bilinear_resize(probs.values, UPSAMPLED_SIZE, UPSAMPLED_SIZE)
    return BinaryMask(bits=resized > 0.5, space=CoordSpace.GRID_256)


def _kernel_offsets(kernel: np.ndarray) -> list[tuple[int, int]]:
    cy, cx = kernel.shape[0] // 2, kernel.shape[1] // 2
    ys, xs = np.nonzero(kernel)
    return [(int(y) - cy, int(x) - cx) for y, x in zip(ys, xs)]


def _shift(bits: np.ndarray, dy: int, dx: int, fill: bool) -> np.ndarray:
    """Translate by (dy, dx); cells shifted in from outside take `fill`."""
    h, w = bits.shape
    out = np.full((h, w), fill, dtype=bool)
    ys = slice(max(dy, 0), h + min(dy, 0))
    xs = slice(max(dx, 0), w + min(dx, 0))
    src_ys = slice(max(-dy, 0), h + min(-dy, 0))
    src_xs = slice(max(-dx, 0), w + min(-dx, 0))
    out[ys, xs] = bits[src_ys, src_xs]
    return out


def erode(mask: BinaryMask, kernel: np.ndarray, iterations: int) -> BinaryMask:
    """Iterated binary erosion; the neighborhood outside the image is background."""
    if iterations < 0:
        raise ShapeError("iterations must be >= 0")
    offsets = _kernel_offsets(np.asarray(kernel, dtype=bool))
    bits = mask.bits
    for _ in range(iterations):
        acc = np.ones_like(bits)
        for dy, dx in offsets:
            acc &= _shift(bits, -dy, -dx, fill=False)
        bits = acc
    return BinaryMask(bits=bits, space=mask.space)


def dilate(mask: BinaryMask, kernel: np.ndarray, iterations: int) -> BinaryMask:
    """Iterated binary dilation, clipped at the image border."""
    if iterations < 0:
        raise ShapeError("iterations must be >= 0")
    offsets = _kernel_offsets(np.asarray(kernel, dtype=bool))
    bits = mask.bits
    for _ in range(iterations):
        acc = np.zeros_like(bits)
        for dy, dx in offsets:
            acc |= _shift(bits, dy, dx, fill=False)
        bits = acc
    return BinaryMask(bits=bits, space=mask.space)


def refine_mask(mask: BinaryMask, config: MorphConfig) -> BinaryMask:
    """Erosion-then-dilation denoising.

    If erosion wipes the mask out entirely, fall back to dilating the
    un-eroded mask: refinement exists to remove noise, not to veto small
    predictions.
    """
    eroded = erode(mask, config.kernel, config.erosion_iterations)
    if eroded.is_empty():
        eroded = mask
    return dilate(eroded, config.kernel, config.dilation_iterations)


def distance_transform_squared(mask: BinaryMask) -> np.ndarray:
    """Exact squared Euclidean distance to the nearest background pixel.

    Two-pass algorithm: per-column nearest-background offsets, then a
    per-row lower envelope of parabolas. All outputs are exact integers.
    A mask with no background at all is measured against a virtual
    background frame one pixel outside the image.
    """
    bits = mask.bits
    if not bits.any():
        return np.zeros(bits.shape, dtype=np.int64)
    if bits.all():
        padded = np.zeros((bits.shape[0] + 2, bits.shape[1] + 2), dtype=bool)
        padded[1:-1, 1:-1] = True
        return _edt_squared(padded)[1:-1, 1:-1]
    return _edt_squared(bits)


def distance_transform(mask: BinaryMask) -> np.ndarray:
    """Euclidean distances (square roots of the exact squared transform)."""
    return np.sqrt(distance_transform_squared(mask).astype(np.float64))


def _edt_squared(bits: np.ndarray) -> np.ndarray:
    h, w = bits.shape
    inf = h + w  # larger than any achievable 1-D distance

    # Pass 1: per column, distance (in rows) to the nearest background cell.
    g = np.empty((h, w), dtype=np.int64)
    g[0] = np.where(bits[0], inf, 0)
    for y in range(1, h):
        g[y] = np.where(bits[y], np.minimum(g[y - 1] + 1, inf), 0)
    for y in range(h - 2, -1, -1):
        g[y] = np.minimum(g[y], g[y + 1] + 1)

    # Pass 2: per row, lower envelope of the parabolas x -> (x - v)^2 + g[v]^2.
    out = np.empty((h, w), dtype=np.int64)
    v = np.empty(w, dtype=np.int64)  # parabola sites
    z = np.empty(w + 1, dtype=np.float64)  # envelope breakpoints
    for y in range(h):
        row = g[y]
        if not row.any():
            out[y] = 0
            continue
        sq = row * row
        k = 0
        v[0] = 0
        z[0] = -math.inf
        z[1] = math.inf
        for q in range(1, w):
            s = ((q * q + sq[q]) - (v[k] * v[k] + sq[v[k]])) / (2 * (q - v[k]))
            while s <= z[k]:
                k -= 1
                s = ((q * q + sq[q]) - (v[k] * v[k] + sq[v[k]])) / (2 * (q - v[k]))
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = math.inf
        k = 0
        for q in range(w):
            while z[k + 1] < q:
                k += 1
            dx = q - v[k]
            out[y, q] = dx * dx + sq[v[k]]
    return out


def extract_point(mask: BinaryMask) -> tuple[int, int]:
    """(x, y) of a foreground pixel farthest from the background.

    Ties break on smallest (y, then x), decided on exact squared distances.
    """
    if mask.is_empty():
        raise EmptyMaskError("cannot extract a location point from an empty mask")
    sq = distance_transform_squared(mask)
    flat_index = int(np.argmax(sq))  # row-major argmax = smallest (y, x) tie-break
    y, x = divmod(flat_index, mask.width)
    return x, y


def extract_bbox(mask: BinaryMask, perturb: PerturbConfig) -> tuple[int, int, int, int]:
    """Tight (x_min, y_min, x_max, y_max) over foreground, optionally grown outward.

    With perturbation enabled, four draws from the documented SplitMix64
    generator (order x_min, y_min, x_max, y_max; each uniform in
    [0, max_pixels]) push the sides outward, clipped to the image frame.
    """
    if mask.is_empty():
        raise EmptyMaskError("cannot extract a bounding box from an empty mask")
    ys, xs = np.nonzero(mask.bits)
    x_min, x_max = int(xs.min()), int(xs.max())
    y_min, y_max = int(ys.min()), int(ys.max())
    if perturb.enabled and perturb.max_pixels > 0:
        gen = SplitMix64(perturb.seed)
        x_min -= gen.randint(perturb.max_pixels)
        y_min -= gen.randint(perturb.max_pixels)
        x_max += gen.randint(perturb.max_pixels)
        y_max += gen.randint(perturb.max_pixels)
        x_min = max(x_min, 0)
        y_min = max(y_min, 0)
        x_max = min(x_max, mask.width - 1)
        y_max = min(y_max, mask.height - 1)
    return x_min, y_min, x_max, y_max


def grid256_to_padded(coord: float) -> float:
    """Center of a grid-256 cell in padded-1024 coordinates."""
    return 4.0 * coord + 2.0


@dataclass(frozen=True, eq=False)
class PromptExtraction:
    """Result of prompt building: refined mask plus prompts (None if unpromptable)."""

    prompts: PromptSet | None
    refined: BinaryMask

    @property
    def promptable(self) -> bool:
        return self.prompts is not None


def build_prompt_set(
    coarse: ProbabilityGrid,
    mode: PromptMode,
    morph: MorphConfig,
    perturb: PerturbConfig,
) -> PromptExtraction:
    """Upsample, refine, and extract prompts in padded-1024 space.

    An empty refined mask yields an unpromptable outcome (prompts=None); the
    caller records an empty prediction. Linear-only mode returns a prompt
    set with neither point nor box.
    """
    refined = refine_mask(upsample_mask(coarse), morph)
    if refined.is_empty():
        return PromptExtraction(prompts=None, refined=refined)
    if mode is PromptMode.LINEAR_ONLY:
        return PromptExtraction(
            prompts=PromptSet(mode=mode, space=CoordSpace.PADDED_1024),
            refined=refined,
        )

    point = None
    if mode.wants_point:
        px, py = extract_point(refined)
        point = PromptPoint(x=grid256_to_padded(px), y=grid256_to_padded(py))
    box = None
    if mode.wants_box:
        x_min, y_min, x_max, y_max = extract_bbox(refined, perturb)
        box = PromptBox(
            x_min=grid256_to_padded(x_min),
            y_min=grid256_to_padded(y_min),
            x_max=grid256_to_padded(x_max),
            y_max=grid256_to_padded(y_max),
        )
    prompts = PromptSet(mode=mode, space=CoordSpace.PADDED_1024, point=point, box=box)
    return PromptExtraction(prompts=prompts, refined=refined)
