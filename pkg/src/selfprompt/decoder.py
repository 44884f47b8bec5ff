"""Bridge between prompts/embeddings and a promptable mask decoder.

Two interchangeable backends:

* ``MockDecoder`` — exactly specified, hermetic, used by the test and
  evaluation suites. Starting from the refined coarse mask it intersects
  with the box interior (cells whose padded-space centers fall inside),
  then keeps the 8-connected component containing the point's cell (or the
  nearest component, ties by lexicographic top-left pixel).
* ``OnnxDecoder`` — runs a single-mask promptable-decoder export via
  onnxruntime (optional dependency). Tensor contract: inputs
  ``image_embeddings`` (1x256x64x64), ``point_coords`` (1xNx2),
  ``point_labels`` (1xN), ``mask_input`` (1x1x256x256 zeros),
  ``has_mask_input`` (0), ``orig_im_size``; a box becomes two pseudo-points
  with labels 2 and 3, a foreground point has label 1, and a padding point
  (0, 0) with label -1 is appended when no box is given. The 256x256
  low-resolution logit output is mapped through the sigmoid.

Both return a 256x256 probability grid aligned to padded-1024 space, which
``postprocess_to_original`` crops to the unpadded region, bilinearly resizes
to the original image, and thresholds at > 0.5.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .data import BinaryMask, CoordSpace, EmbeddingGrid, ProbabilityGrid, PromptMode, PromptSet
from .errors import DecoderError, GeometryError, ShapeError
from .resample import bilinear_resize, round_half_up

PADDED_SIZE = 1024
LOWRES_SIZE = 256


@dataclass(frozen=True)
class GeometryInfo:
    """Reconstruction of the encoder's resize-longest-side-then-pad preprocessing."""

    original_height: int
    original_width: int
    scale: float
    resized_height: int
    resized_width: int

    @classmethod
    def from_original(cls, height: int, width: int) -> "GeometryInfo":
        if height < 1 or width < 1:
            raise GeometryError(f"degenerate original size {height}x{width}")
        scale = PADDED_SIZE / max(height, width)
        return cls(
            original_height=height,
            original_width=width,
            scale=scale,
            resized_height=round_half_up(height * scale),
            resized_width=round_half_up(width * scale),
        )

    def original_to_padded(self, coord: float) -> float:
        return coord * self.scale

    def padded_to_original(self, coord: float) -> float:
        return coord / self.scale


@dataclass(frozen=True)
class DecoderBackend:
    """Backend selector: ``mock`` or ``external-model`` with a model path."""

    kind: str  # "mock" | "external-model"
    model_path: str | None = None

    def __post_init__(self):
        if self.kind not in ("mock", "external-model"):
            raise DecoderError(f"unknown decoder backend kind {self.kind!r}")
        if self.kind == "external-model" and not self.model_path:
            raise DecoderError("external-model backend requires a model path")


def create_decoder(backend: DecoderBackend):
    if backend.kind == "mock":
        return MockDecoder()
    return OnnxDecoder(backend.model_path)


def _padded_to_cell(coord: float) -> int:
    """Grid-256 cell whose center (4c + 2) is nearest the padded coordinate."""
    return int(np.clip(round_half_up((coord - 2.0) / 4.0), 0, LOWRES_SIZE - 1))


def _box_to_cell_range(lo: float, hi: float) -> tuple[int, int]:
    """Cells whose padded-space centers lie inside [lo, hi]."""
    c_lo = math.ceil((lo - 2.0) / 4.0)
    c_hi = math.floor((hi - 2.0) / 4.0)
    return max(c_lo, 0), min(c_hi, LOWRES_SIZE - 1)


def mock_decode(
    embedding: EmbeddingGrid, prompts: PromptSet, coarse_refined: BinaryMask
) -> BinaryMask:
    """Deterministic stand-in decoder defined entirely by mask/prompt geometry."""
    if coarse_refined.bits.shape != (LOWRES_SIZE, LOWRES_SIZE):
        raise ShapeError(f"refined mask must be 256x256, got {coarse_refined.bits.shape}")
    bits = coarse_refined.bits.copy()
    in_padded = prompts.space is CoordSpace.PADDED_1024

    if prompts.box is not None:
        box = prompts.box
        if in_padded:
            x_lo, x_hi = _box_to_cell_range(box.x_min, box.x_max)
            y_lo, y_hi = _box_to_cell_range(box.y_min, box.y_max)
        else:
            x_lo, x_hi = int(box.x_min), int(box.x_max)
            y_lo, y_hi = int(box.y_min), int(box.y_max)
        keep = np.zeros_like(bits)
        if x_lo <= x_hi and y_lo <= y_hi:
            keep[y_lo : y_hi + 1, x_lo : x_hi + 1] = True
        bits &= keep

    if prompts.point is not None and bits.any():
        if in_padded:
            px = _padded_to_cell(prompts.point.x)
            py = _padded_to_cell(prompts.point.y)
        else:
            px, py = int(prompts.point.x), int(prompts.point.y)
        labels, count = ndimage.label(bits, structure=np.ones((3, 3), dtype=bool))
        target = labels[py, px] if 0 <= py < LOWRES_SIZE and 0 <= px < LOWRES_SIZE else 0
        if target == 0:
            target = _nearest_component(labels, count, px, py)
        bits = labels == target

    return BinaryMask(bits=bits, space=CoordSpace.GRID_256)


def _nearest_component(labels: np.ndarray, count: int, px: int, py: int) -> int:
    """Component with minimal squared distance to (px, py); ties by top-left pixel."""
    best = None
    for component in range(1, count + 1):
        ys, xs = np.nonzero(labels == component)
        d2 = int(((ys - py) ** 2 + (xs - px) ** 2).min())
        top_left = (int(ys[0]), int(xs[0]))  # nonzero scans row-major
        key = (d2, top_left)
        if best is None or key < best[0]:
            best = (key, component)
    return best[1]


class MockDecoder:
    """Counting wrapper around mock_decode (the counter backs protocol assertions)."""

    kind = "mock"

    def __init__(self):
        self.call_count = 0
        self._lock = threading.Lock()

    def decode(
        self,
        embedding: EmbeddingGrid,
        prompts: PromptSet,
        geometry: GeometryInfo,
        coarse_refined: BinaryMask | None = None,
    ) -> ProbabilityGrid:
        if prompts.mode is PromptMode.LINEAR_ONLY:
            raise DecoderError("linear-only prompt sets never reach the decoder")
        if coarse_refined is None:
            raise DecoderError("mock decoder requires the refined coarse mask")
        with self._lock:
            self.call_count += 1
        bits = mock_decode(embedding, prompts, coarse_refined)
        return ProbabilityGrid(
            values=bits.bits.astype(np.float64), space=CoordSpace.GRID_256
        )


class OnnxDecoder:
    """Single-session wrapper over an exported promptable mask decoder."""

    kind = "external-model"

    def __init__(self, model_path: str):
        try:
            import onnxruntime  # deferred: optional dependency
        except ImportError as exc:
            raise DecoderError(
                "onnxruntime is required for the external-model backend; "
                "install the 'onnx' extra"
            ) from exc
        try:
            self._session = onnxruntime.InferenceSession(
                model_path, providers=["CPUExecutionProvider"]
            )
        except Exception as exc:
            raise DecoderError(f"failed to load decoder model {model_path}: {exc}") from exc
        self.call_count = 0

    def decode(
        self,
        embedding: EmbeddingGrid,
        prompts: PromptSet,
        geometry: GeometryInfo,
        coarse_refined: BinaryMask | None = None,
    ) -> ProbabilityGrid:
        if prompts.mode is PromptMode.LINEAR_ONLY:
            raise DecoderError("linear-only prompt sets never reach the decoder")
        if prompts.space is not CoordSpace.PADDED_1024:
            raise ShapeError("decoder prompts must be in padded-1024 space")
        self.call_count += 1

        coords: list[tuple[float, float]] = []
        labels: list[float] = []
        if prompts.point is not None:
            coords.append((prompts.point.x, prompts.point.y))
            labels.append(1.0)
        if prompts.box is not None:
            coords.append((prompts.box.x_min, prompts.box.y_min))
            labels.append(2.0)
            coords.append((prompts.box.x_max, prompts.box.y_max))
            labels.append(3.0)
        else:
            coords.append((0.0, 0.0))
            labels.append(-1.0)

        feeds = {
            "image_embeddings": embedding.values.astype(np.float32)[None],
            "point_coords": np.asarray(coords, dtype=np.float32)[None],
            "point_labels": np.asarray(labels, dtype=np.float32)[None],
            "mask_input": np.zeros((1, 1, LOWRES_SIZE, LOWRES_SIZE), dtype=np.float32),
            "has_mask_input": np.zeros(1, dtype=np.float32),
            "orig_im_size": np.asarray(
                [geometry.original_height, geometry.original_width], dtype=np.float32
            ),
        }
        try:
            names = [o.name for o in self._session.get_outputs()]
            results = self._session.run(None, feeds)
        except Exception as exc:
            raise DecoderError(f"decoder run failed: {exc}") from exc
        index = names.index("low_res_masks") if "low_res_masks" in names else len(results) - 1
        logits = np.asarray(results[index])
        if logits.ndim != 4 or logits.shape[-2:] != (LOWRES_SIZE, LOWRES_SIZE):
            raise DecoderError(f"unexpected decoder output shape {logits.shape}")
        probs = 1.0 / (1.0 + np.exp(-logits[0, 0].astype(np.float64)))
        return ProbabilityGrid(values=probs, space=CoordSpace.GRID_256)


def decode(
    decoder,
    embedding: EmbeddingGrid,
    prompts: PromptSet,
    geometry: GeometryInfo,
    coarse_refined: BinaryMask | None = None,
) -> ProbabilityGrid:
    """Run whichever backend was created; output is always 256x256 probabilities."""
    return decoder.decode(embedding, prompts, geometry, coarse_refined)


def _cropped_cells(grid_len: int, resized: int) -> int:
    return max(1, round_half_up(grid_len * resized / PADDED_SIZE))


def postprocess_to_original(padded_probs: ProbabilityGrid, geometry: GeometryInfo) -> BinaryMask:
    """Crop the unpadded region, resize to the original frame, threshold > 0.5."""
    values = padded_probs.values
    if values.shape != (LOWRES_SIZE, LOWRES_SIZE):
        raise ShapeError(f"expected 256x256 decoder output, got {values.shape}")
    rows = _cropped_cells(LOWRES_SIZE, geometry.resized_height)
    cols = _cropped_cells(LOWRES_SIZE, geometry.resized_width)
    cropped = values[:rows, :cols]
    resized = bilinear_resize(cropped, geometry.original_height, geometry.original_width)
    return BinaryMask(bits=resized > 0.5, space=CoordSpace.ORIGINAL)


def coarse_to_original(coarse: ProbabilityGrid, geometry: GeometryInfo) -> BinaryMask:
    """Linear-only prediction path: 64x64 probabilities straight to original space."""
    values = coarse.values
    if values.shape != (64, 64):
        raise ShapeError(f"expected a 64x64 coarse grid, got {values.shape}")
    rows = _cropped_cells(64, geometry.resized_height)
    cols = _cropped_cells(64, geometry.resized_width)
    cropped = values[:rows, :cols]
    resized = bilinear_resize(cropped, geometry.original_height, geometry.original_width)
    return BinaryMask(bits=resized > 0.5, space=CoordSpace.ORIGINAL)
