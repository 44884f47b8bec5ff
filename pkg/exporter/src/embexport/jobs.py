"""Embedding export: pair images with masks, encode, write SPEB + manifest."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import EncoderFn, load_checkpoint_encoder
from .errors import ExportError
from .preprocess import load_image, preprocess_image
from .writer import EMBED_SHAPE, copy_mask, manifest_entry, write_manifest, write_speb

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


@dataclass(frozen=True)
class ExportJob:
    image_dir: Path
    mask_dir: Path
    output_dir: Path
    checkpoint_path: Path | None = None
    batch_size: int = 4

    def __post_init__(self):
        if not Path(self.image_dir).is_dir():
            raise ExportError(f"image directory not found: {self.image_dir}")
        if not Path(self.mask_dir).is_dir():
            raise ExportError(f"mask directory not found: {self.mask_dir}")
        if self.batch_size < 1:
            raise ExportError("batch_size must be >= 1")


def _list_pairs(job: ExportJob) -> list[tuple[str, Path, Path]]:
    images = {
        p.stem: p
        for p in sorted(Path(job.image_dir).iterdir())
        if p.suffix.lower() in IMAGE_EXTENSIONS
    }
    masks = {
        p.stem: p
        for p in sorted(Path(job.mask_dir).iterdir())
        if p.suffix.lower() in IMAGE_EXTENSIONS
    }
    if not images:
        raise ExportError(f"no images found in {job.image_dir}")
    missing_masks = sorted(set(images) - set(masks))
    if missing_masks:
        raise ExportError(f"images without masks: {', '.join(missing_masks[:5])}")
    orphan_masks = sorted(set(masks) - set(images))
    if orphan_masks:
        raise ExportError(f"masks without images: {', '.join(orphan_masks[:5])}")
    return [(stem, images[stem], masks[stem]) for stem in sorted(images)]


def export_embeddings(job: ExportJob, encoder: EncoderFn | None = None) -> Path:
    """Encode every image/mask pair; returns the written manifest path.

    The encoder defaults to the checkpoint named in the job; tests inject a
    deterministic stand-in instead.
    """
    if encoder is None:
        if job.checkpoint_path is None:
            raise ExportError("job has no checkpoint and no encoder was injected")
        encoder = load_checkpoint_encoder(job.checkpoint_path)

    out = Path(job.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    pairs = _list_pairs(job)
    entries = []
    for start in range(0, len(pairs), job.batch_size):
        chunk = pairs[start : start + job.batch_size]
        batch = []
        geometries = []
        for _, image_path, _ in chunk:
            tensor, geometry = preprocess_image(load_image(image_path))
            batch.append(tensor)
            geometries.append(geometry)
        embeddings = np.asarray(encoder(np.stack(batch)))
        if embeddings.shape != (len(chunk), *EMBED_SHAPE):
            raise ExportError(
                f"encoder returned {embeddings.shape}, expected {(len(chunk), *EMBED_SHAPE)}"
            )
        for (stem, _, mask_path), geometry, values in zip(chunk, geometries, embeddings):
            embedding_name = f"{stem}.speb"
            mask_name = f"{stem}_mask.png"
            write_speb(values, out / embedding_name)
            copy_mask(
                mask_path,
                out / mask_name,
                (geometry.original_height, geometry.original_width),
            )
            entries.append(manifest_entry(stem, embedding_name, mask_name, geometry))

    manifest_path = out / "manifest.json"
    write_manifest(entries, manifest_path)
    return manifest_path
