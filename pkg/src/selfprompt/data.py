"""Domain types, file formats, and manifest handling shared by the pipeline.

File formats (normative, all multi-byte integers little-endian):

SPEB embedding file
    magic ``SPEB`` (4 bytes), u32 version = 1, u32 channels, u32 height,
    u32 width, then channels*height*width IEEE-754 32-bit reals in
    channel-major (c, y, x) order. The supported encoder variant produces
    exactly 256 x 64 x 64; the loader rejects anything else, as well as
    non-finite values.

Mask files
    8-bit single-channel grayscale PNG. A pixel >= 128 is foreground.

Manifest
    One JSON document with an ``entries`` array; each entry has ``id``,
    ``embedding_path``, ``mask_path``, ``original_height``,
    ``original_width``. Relative paths are resolved against the manifest's
    own directory. Unknown extra keys are ignored.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, ManifestError, ShapeError

EMBED_CHANNELS = 256
EMBED_SIZE = 64

_SPEB_MAGIC = b"SPEB"
_SPEB_VERSION = 1
_SPEB_HEADER = struct.Struct("<4sIIII")


class CoordSpace(enum.Enum):
    """Coordinate frame a grid or prompt lives in; never silently coerced."""

    ORIGINAL = "original-image"
    PADDED_1024 = "padded-1024"
    GRID_64 = "grid-64"
    GRID_256 = "grid-256"


class PromptMode(enum.Enum):
    LINEAR_ONLY = "linear-only"
    POINT = "point"
    BOX = "box"
    POINT_AND_BOX = "point-and-box"

    @property
    def wants_point(self) -> bool:
        return self in (PromptMode.POINT, PromptMode.POINT_AND_BOX)

    @property
    def wants_box(self) -> bool:
        return self in (PromptMode.BOX, PromptMode.POINT_AND_BOX)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EmbeddingGrid:
    """Frozen-encoder output for one image: 256 channels over a 64x64 grid."""

    values: np.ndarray  # float32, shape (256, 64, 64), channel-major

    def __post_init__(self):
        v = self.values
        if v.shape != (EMBED_CHANNELS, EMBED_SIZE, EMBED_SIZE):
            raise ShapeError(
                f"embedding must be {EMBED_CHANNELS}x{EMBED_SIZE}x{EMBED_SIZE}, got {v.shape}"
            )
        if not np.isfinite(v).all():
            raise FormatError("embedding contains non-finite values")
        _freeze(v)

    @property
    def channels(self) -> int:
        return EMBED_CHANNELS

    @property
    def height(self) -> int:
        return EMBED_SIZE

    @property
    def width(self) -> int:
        return EMBED_SIZE


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """2-D boolean label grid tagged with the coordinate space it lives in."""

    bits: np.ndarray  # bool, shape (height, width), row-major
    space: CoordSpace

    def __post_init__(self):
        if self.bits.ndim != 2:
            raise ShapeError(f"mask must be 2-D, got shape {self.bits.shape}")
        if self.bits.dtype != np.bool_:
            object.__setattr__(self, "bits", self.bits.astype(bool))
        _freeze(self.bits)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def foreground_count(self) -> int:
        return int(self.bits.sum())

    def is_empty(self) -> bool:
        return not self.bits.any()


@dataclass(frozen=True, eq=False)
class ProbabilityGrid:
    """2-D grid of probabilities in [0, 1], tagged with its coordinate space."""

    values: np.ndarray  # float, shape (height, width)
    space: CoordSpace

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise ShapeError(f"probability grid must be 2-D, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise FormatError("probability grid contains non-finite values")
        if (v < 0).any() or (v > 1).any():
            raise FormatError("probability grid values must lie in [0, 1]")
        _freeze(v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PromptPoint:
    x: float
    y: float
    label: str = "foreground"


@dataclass(frozen=True)
class PromptBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float


@dataclass(frozen=True)
class PromptSet:
    """Prompts for one image: optional foreground point and/or box, plus mode.

    Coordinates must be in padded-1024 space by the time they reach a decoder.
    """

    mode: PromptMode
    space: CoordSpace
    point: PromptPoint | None = None
    box: PromptBox | None = None

    def __post_init__(self):
        if self.mode.wants_point and self.point is None:
            raise ShapeError(f"mode {self.mode.value} requires a point")
        if self.mode.wants_box and self.box is None:
            raise ShapeError(f"mode {self.mode.value} requires a box")
        if self.mode is PromptMode.LINEAR_ONLY and (self.point or self.box):
            raise ShapeError("linear-only prompt set carries no point or box")
        if self.box is not None:
            b = self.box
            if b.x_min > b.x_max or b.y_min > b.y_max:
                raise ShapeError(f"box corners out of order: {b}")
        if self.space is CoordSpace.PADDED_1024:
            for value in self._coords():
                if not (0.0 <= value <= 1024.0):
                    raise ShapeError(f"padded-1024 coordinate {value} outside [0, 1024]")

    def _coords(self):
        if self.point is not None:
            yield self.point.x
            yield self.point.y
        if self.box is not None:
            yield from (self.box.x_min, self.box.y_min, self.box.x_max, self.box.y_max)


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    embedding_path: Path
    mask_path: Path
    original_height: int
    original_width: int


@dataclass(frozen=True)
class SampleManifest:
    entries: tuple[ManifestEntry, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def entry(self, sample_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.id == sample_id:
                return e
        raise ManifestError(f"unknown sample id {sample_id!r}")


def load_manifest(path: str | Path) -> SampleManifest:
    """Parse and validate a JSON manifest; every defect names the offending entry."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("entries"), list):
        raise ManifestError(f"manifest {path} must be an object with an 'entries' array")

    base = path.parent
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    for index, raw in enumerate(doc["entries"]):
        where = f"manifest {path} entry {index}"
        if not isinstance(raw, dict):
            raise ManifestError(f"{where}: entry must be an object")
        try:
            sample_id = raw["id"]
            emb = raw["embedding_path"]
            mask = raw["mask_path"]
            height = raw["original_height"]
            width = raw["original_width"]
        except KeyError as exc:
            raise ManifestError(f"{where}: missing field {exc}") from exc
        if not isinstance(sample_id, str) or not sample_id:
            raise ManifestError(f"{where}: id must be a non-empty string")
        if sample_id in seen:
            raise ManifestError(f"{where}: duplicate id {sample_id!r}")
        seen.add(sample_id)
        if not isinstance(emb, str) or not emb or not isinstance(mask, str) or not mask:
            raise ManifestError(f"{where} ({sample_id!r}): paths must be non-empty strings")
        if not isinstance(height, int) or not isinstance(width, int) or height < 1 or width < 1:
            raise ManifestError(
                f"{where} ({sample_id!r}): original dimensions must be positive integers"
            )
        entries.append(
            ManifestEntry(
                id=sample_id,
                embedding_path=base / emb,
                mask_path=base / mask,
                original_height=height,
                original_width=width,
            )
        )
    return SampleManifest(entries=tuple(entries))


def write_manifest(manifest: SampleManifest, path: str | Path) -> None:
    """Inverse of load_manifest; paths are written relative to the manifest when possible."""
    path = Path(path)
    base = path.parent.resolve()

    def rel(p: Path) -> str:
        try:
            return str(p.resolve().relative_to(base))
        except ValueError:
            return str(p)

    doc = {
        "entries": [
            {
                "id": e.id,
                "embedding_path": rel(e.embedding_path),
                "mask_path": rel(e.mask_path),
                "original_height": e.original_height,
                "original_width": e.original_width,
            }
            for e in manifest.entries
        ]
    }
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_embedding(path: str | Path) -> EmbeddingGrid:
    """Load one SPEB file, enforcing magic, version, dimensions, and finiteness."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read embedding file {path}: {exc}") from exc
    if len(blob) < _SPEB_HEADER.size:
        raise FormatError(f"{path}: truncated SPEB header")
    magic, version, channels, height, width = _SPEB_HEADER.unpack_from(blob)
    if magic != _SPEB_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {_SPEB_MAGIC!r}")
    if version != _SPEB_VERSION:
        raise FormatError(f"{path}: unsupported SPEB version {version}")
    if (channels, height, width) != (EMBED_CHANNELS, EMBED_SIZE, EMBED_SIZE):
        raise FormatError(
            f"{path}: dimension mismatch {channels}x{height}x{width}, "
            f"expected {EMBED_CHANNELS}x{EMBED_SIZE}x{EMBED_SIZE}"
        )
    expected = _SPEB_HEADER.size + 4 * channels * height * width
    if len(blob) < expected:
        raise FormatError(f"{path}: truncated payload ({len(blob)} of {expected} bytes)")
    if len(blob) > expected:
        raise FormatError(f"{path}: {len(blob) - expected} trailing bytes after payload")
    values = np.frombuffer(blob, dtype="<f4", offset=_SPEB_HEADER.size).reshape(
        channels, height, width
    )
    if not np.isfinite(values).all():
        raise FormatError(f"{path}: embedding contains non-finite values")
    return EmbeddingGrid(values=values.copy())


def write_embedding(grid: EmbeddingGrid, path: str | Path) -> None:
    path = Path(path)
    header = _SPEB_HEADER.pack(
        _SPEB_MAGIC, _SPEB_VERSION, EMBED_CHANNELS, EMBED_SIZE, EMBED_SIZE
    )
    payload = np.ascontiguousarray(grid.values, dtype="<f4").tobytes()
    path.write_bytes(header + payload)


def read_mask(path: str | Path, space: CoordSpace) -> BinaryMask:
    """Load an 8-bit grayscale PNG mask; pixel >= 128 is foreground."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.mode != "L":
                raise FormatError(
                    f"{path}: mask must be 8-bit single-channel grayscale, got mode {img.mode!r}"
                )
            values = np.asarray(img, dtype=np.uint8)
    except (OSError, UnidentifiedImageError) as exc:
        raise FormatError(f"cannot read mask file {path}: {exc}") from exc
    return BinaryMask(bits=values >= 128, space=space)


def write_mask(mask: BinaryMask, path: str | Path) -> None:
    values = np.where(mask.bits, 255, 0).astype(np.uint8)
    Image.fromarray(values, mode="L").save(Path(path), format="PNG")
