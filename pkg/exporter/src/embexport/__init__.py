"""Offline exporter producing the segmentation pipeline's input artifacts."""

from .encoder import EncoderFn, load_checkpoint_encoder
from .errors import ExportError
from .geometry import ExportGeometry, round_half_up
from .jobs import ExportJob, export_embeddings
from .onnx_export import export_decoder
from .preprocess import load_image, preprocess_image
from .writer import copy_mask, manifest_entry, write_manifest, write_speb

__version__ = "0.1.0"
