"""Single-mask promptable-decoder ONNX export.

Wraps the official export model class so the resulting file honors the
consumer's tensor contract unmodified: inputs image_embeddings,
point_coords, point_labels, mask_input, has_mask_input, orig_im_size;
outputs masks, iou_predictions, low_res_masks; multimask disabled.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ExportError

INPUT_NAMES = [
    "image_embeddings",
    "point_coords",
    "point_labels",
    "mask_input",
    "has_mask_input",
    "orig_im_size",
]
OUTPUT_NAMES = ["masks", "iou_predictions", "low_res_masks"]


def export_decoder(checkpoint_path: str | Path, out_path: str | Path) -> Path:
    checkpoint_path = Path(checkpoint_path)
    if not checkpoint_path.is_file():
        raise ExportError(f"checkpoint not found: {checkpoint_path}")
    try:
        import torch
        from segment_anything import sam_model_registry
        from segment_anything.utils.onnx import SamOnnxModel
    except ImportError as exc:
        raise ExportError(
            "torch and segment-anything are required for the decoder export; "
            "install the 'sam' extra"
        ) from exc

    try:
        sam = sam_model_registry["vit_b"](checkpoint=str(checkpoint_path))
        model = SamOnnxModel(sam, return_single_mask=True)
    except Exception as exc:
        raise ExportError(f"cannot build export model from {checkpoint_path}: {exc}") from exc

    embed_dim = sam.prompt_encoder.embed_dim
    embed_size = sam.prompt_encoder.image_embedding_size
    mask_size = [4 * s for s in embed_size]
    dummy = {
        "image_embeddings": torch.randn(1, embed_dim, *embed_size, dtype=torch.float),
        "point_coords": torch.randint(0, 1024, (1, 5, 2), dtype=torch.float),
        "point_labels": torch.randint(0, 4, (1, 5), dtype=torch.float),
        "mask_input": torch.randn(1, 1, *mask_size, dtype=torch.float),
        "has_mask_input": torch.tensor([1], dtype=torch.float),
        "orig_im_size": torch.tensor([1500, 2250], dtype=torch.float),
    }
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with torch.no_grad():
            torch.onnx.export(
                model,
                tuple(dummy.values()),
                str(out_path),
                export_params=True,
                opset_version=17,
                do_constant_folding=True,
                input_names=INPUT_NAMES,
                output_names=OUTPUT_NAMES,
                dynamic_axes={
                    "point_coords": {1: "num_points"},
                    "point_labels": {1: "num_points"},
                },
            )
    except Exception as exc:
        raise ExportError(f"decoder export failed: {exc}") from exc
    return out_path
