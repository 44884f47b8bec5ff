"""Self-prompting pipeline for promptable segmentation models.

A pixel-wise linear classifier trained on frozen image-encoder embeddings
produces a coarse mask; a location point and bounding box extracted from it
prompt a frozen mask decoder. Includes the few-shot evaluation protocol
(k-fold CV, shot counts, prompt-mode ablations, Dice/IoU reporting).
"""

from .classifier import (
    FewShotTrainSet,
    PixelClassifier,
    TrainConfig,
    fit_classifier,
    fit_pixel_classifier,
    load_classifier,
    objective,
    pixel_objective,
    predict_probability_grid,
    save_classifier,
    seeded_random_init,
    threshold_mask,
)
from .data import (
    BinaryMask,
    CoordSpace,
    EmbeddingGrid,
    ManifestEntry,
    ProbabilityGrid,
    PromptBox,
    PromptMode,
    PromptPoint,
    PromptSet,
    SampleManifest,
    load_manifest,
    read_embedding,
    read_mask,
    write_embedding,
    write_manifest,
    write_mask,
)
from .decoder import (
    DecoderBackend,
    GeometryInfo,
    MockDecoder,
    OnnxDecoder,
    coarse_to_original,
    create_decoder,
    decode,
    mock_decode,
    postprocess_to_original,
)
from .errors import (
    ConfigError,
    DecoderError,
    EmptyMaskError,
    FormatError,
    GeometryError,
    ManifestError,
    SelfPromptError,
    ShapeError,
    TrainingError,
)
from .evaluate import (
    ExperimentConfig,
    MetricReport,
    ReportCell,
    SampleScore,
    align_gt_to_grid64,
    dice,
    emit_overlay,
    emit_report,
    iou,
    kfold_split,
    run_experiment,
    sample_shots,
)
from .prompts import (
    MorphConfig,
    PerturbConfig,
    PromptExtraction,
    build_prompt_set,
    dilate,
    distance_transform,
    distance_transform_squared,
    erode,
    extract_bbox,
    extract_point,
    full_square_kernel,
    refine_mask,
    upsample_mask,
)

__version__ = "0.1.0"
