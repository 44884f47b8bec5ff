"""Few-shot evaluation protocol: k-fold CV, shot sampling, prompt-mode matrix.

For every (fold, shot count, prompt mode) cell the harness fits one
classifier on the sampled shots, predicts every held-out sample, builds
prompts, decodes (linear-only skips the decoder entirely), maps predictions
back to original-image space, and scores Dice/IoU there. Unpromptable
samples count as empty predictions.

Determinism: fold shuffling and shot sampling use the portable SplitMix64
generator; shot sampling within fold ``i`` is re-seeded with ``seed XOR i``;
per-sample box perturbation derives its seed from the configured seed and
the sample id.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .classifier import FewShotTrainSet, TrainConfig, fit_classifier, predict_probability_grid
from .data import (
    BinaryMask,
    CoordSpace,
    EmbeddingGrid,
    ManifestEntry,
    ProbabilityGrid,
    PromptMode,
    PromptSet,
    SampleManifest,
    read_embedding,
    read_mask,
)
from .decoder import DecoderBackend, GeometryInfo, coarse_to_original, create_decoder, postprocess_to_original
from .errors import ConfigError, SelfPromptError, ShapeError
from .prompts import MorphConfig, PerturbConfig, build_prompt_set, erode
from .resample import overlap_matrix
from .rng import SplitMix64, derive_seed

FULL_SHOTS = "full"

ALL_MODES = (
    PromptMode.LINEAR_ONLY,
    PromptMode.POINT,
    PromptMode.BOX,
    PromptMode.POINT_AND_BOX,
)


def dice(pred: BinaryMask, gt: BinaryMask) -> float:
    """2|A & B| / (|A| + |B|); both empty -> 1.0, exactly one empty -> 0.0."""
    _check_pair(pred, gt)
    inter = int((pred.bits & gt.bits).sum())
    total = pred.foreground_count() + gt.foreground_count()
    if total == 0:
        return 1.0
    return 2.0 * inter / total


def iou(pred: BinaryMask, gt: BinaryMask) -> float:
    """|A & B| / |A | B|; both empty -> 1.0."""
    _check_pair(pred, gt)
    inter = int((pred.bits & gt.bits).sum())
    union = pred.foreground_count() + gt.foreground_count() - inter
    if union == 0:
        return 1.0
    return inter / union


def _check_pair(pred: BinaryMask, gt: BinaryMask) -> None:
    if pred.bits.shape != gt.bits.shape:
        raise ShapeError(f"mask shape mismatch: {pred.bits.shape} vs {gt.bits.shape}")
    if pred.space is not gt.space:
        raise ShapeError(f"mask space mismatch: {pred.space.value} vs {gt.space.value}")


def align_gt_to_grid64(gt: BinaryMask, geometry: GeometryInfo) -> BinaryMask:
    """Exact area-average of the original-space mask onto the 64x64 grid, >= 0.5.

    Each grid cell covers a 16x16 block of padded-1024 pixels; the original
    mask occupies the top-left resized region, padding counts as background.
    Coverage fractions come from exact interval-overlap weights, so boundary
    cells match a per-cell coverage integral to float precision.
    """
    if gt.bits.shape != (geometry.original_height, geometry.original_width):
        raise ShapeError(
            f"ground truth {gt.bits.shape} does not match geometry "
            f"{geometry.original_height}x{geometry.original_width}"
        )
    wy = overlap_matrix(64, 16.0, geometry.original_height, geometry.scale)
    wx = overlap_matrix(64, 16.0, geometry.original_width, geometry.scale)
    coverage = wy @ gt.bits.astype(np.float64) @ wx.T / 256.0
    return BinaryMask(bits=coverage >= 0.5, space=CoordSpace.GRID_64)


def kfold_split(
    manifest: SampleManifest, folds: int, seed: int
) -> list[tuple[list[str], list[str]]]:
    """Deterministic k-fold partition: (train_pool_ids, eval_ids) per fold."""
    if folds < 2:
        raise ConfigError(f"folds must be >= 2, got {folds}")
    ids = manifest.ids()
    if len(ids) < folds:
        raise ConfigError(f"{folds} folds exceed the {len(ids)}-sample dataset")
    shuffled = list(ids)
    SplitMix64(seed).shuffle(shuffled)
    base, extra = divmod(len(shuffled), folds)
    splits = []
    start = 0
    for fold in range(folds):
        size = base + (1 if fold < extra else 0)
        eval_ids = shuffled[start : start + size]
        train_pool = shuffled[:start] + shuffled[start + size :]
        splits.append((train_pool, eval_ids))
        start += size
    return splits


def sample_shots(train_pool_ids: list[str], shots: int | str, seed: int) -> list[str]:
    """Uniform sample without replacement; ``"full"`` selects the whole pool."""
    if shots == FULL_SHOTS:
        return list(train_pool_ids)
    if not isinstance(shots, int) or shots < 1:
        raise ConfigError(f"shot count must be a positive integer or 'full', got {shots!r}")
    if shots > len(train_pool_ids):
        raise ConfigError(f"cannot sample {shots} shots from a pool of {len(train_pool_ids)}")
    items = list(train_pool_ids)
    SplitMix64(seed).shuffle(items)
    return items[:shots]


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "dataset"
    folds: int = 5
    shot_counts: tuple = (10, 20, 40, FULL_SHOTS)
    modes: tuple = ALL_MODES
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    morph: MorphConfig = field(default_factory=MorphConfig)
    perturb: PerturbConfig = field(default_factory=PerturbConfig)
    backend: DecoderBackend = field(default_factory=lambda: DecoderBackend(kind="mock"))
    workers: int = 1

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        for shots in self.shot_counts:
            if shots != FULL_SHOTS and (not isinstance(shots, int) or shots < 1):
                raise ConfigError(f"invalid shot count {shots!r}")
        for mode in self.modes:
            if not isinstance(mode, PromptMode):
                raise ConfigError(f"invalid prompt mode {mode!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def parameter_lines(self) -> dict[str, str]:
        backend = self.backend.kind
        if self.backend.model_path:
            backend += f":{self.backend.model_path}"
        return {
            "dataset": self.dataset,
            "folds": str(self.folds),
            "shot_counts": ",".join(str(s) for s in self.shot_counts),
            "modes": ",".join(m.value for m in self.modes),
            "seed": str(self.seed),
            "backend": backend,
            "max_iterations": str(self.train.max_iterations),
            "convergence_tolerance": repr(self.train.convergence_tolerance),
            "regularization_weight": repr(self.train.regularization_weight),
            "erosion_iterations": str(self.morph.erosion_iterations),
            "dilation_iterations": str(self.morph.dilation_iterations),
            "perturb_max_pixels": str(self.perturb.max_pixels),
            "perturb_enabled": str(self.perturb.enabled).lower(),
            "perturb_seed": str(self.perturb.seed),
            "workers": str(self.workers),
        }


@dataclass(frozen=True)
class SampleScore:
    sample_id: str
    dice: float
    iou: float

    def __post_init__(self):
        if not (0.0 <= self.dice <= 1.0 and 0.0 <= self.iou <= 1.0):
            raise ConfigError(f"scores outside [0, 1] for {self.sample_id!r}")


@dataclass(frozen=True)
class ReportCell:
    fold: int  # -1 marks the cross-fold aggregate
    shots: int | str
    mode: PromptMode
    scores: tuple[SampleScore, ...]

    @property
    def n(self) -> int:
        return len(self.scores)

    @property
    def mean_dice_pct(self) -> float:
        return 100.0 * sum(s.dice for s in self.scores) / len(self.scores) if self.scores else 0.0

    @property
    def mean_iou_pct(self) -> float:
        return 100.0 * sum(s.iou for s in self.scores) / len(self.scores) if self.scores else 0.0


@dataclass(frozen=True)
class MetricReport:
    dataset: str
    parameters: dict[str, str]
    cells: tuple[ReportCell, ...]

    def fold_cells(self) -> list[ReportCell]:
        return [c for c in self.cells if c.fold >= 0]

    def aggregate_cells(self) -> list[ReportCell]:
        return [c for c in self.cells if c.fold < 0]


@dataclass(frozen=True, eq=False)
class LoadedSample:
    entry: ManifestEntry
    embedding: EmbeddingGrid
    gt_original: BinaryMask
    gt_grid64: BinaryMask
    geometry: GeometryInfo


def load_sample(entry: ManifestEntry) -> LoadedSample:
    try:
        embedding = read_embedding(entry.embedding_path)
        gt = read_mask(entry.mask_path, CoordSpace.ORIGINAL)
        geometry = GeometryInfo.from_original(entry.original_height, entry.original_width)
        gt64 = align_gt_to_grid64(gt, geometry)
    except SelfPromptError as exc:
        raise type(exc)(f"sample {entry.id!r}: {exc}") from exc
    return LoadedSample(entry=entry, embedding=embedding, gt_original=gt, gt_grid64=gt64, geometry=geometry)


def predict_sample(
    embedding: EmbeddingGrid,
    coarse: ProbabilityGrid,
    geometry: GeometryInfo,
    mode: PromptMode,
    morph: MorphConfig,
    perturb: PerturbConfig,
    decoder,
) -> tuple[BinaryMask, PromptSet | None]:
    """One sample through prompts and decoding; returns the original-space mask."""
    if mode is PromptMode.LINEAR_ONLY:
        return coarse_to_original(coarse, geometry), None
    extraction = build_prompt_set(coarse, mode, morph, perturb)
    if not extraction.promptable:
        empty = np.zeros((geometry.original_height, geometry.original_width), dtype=bool)
        return BinaryMask(bits=empty, space=CoordSpace.ORIGINAL), None
    padded = decoder.decode(embedding, extraction.prompts, geometry, extraction.refined)
    return postprocess_to_original(padded, geometry), extraction.prompts


def run_experiment(config: ExperimentConfig, manifest: SampleManifest) -> MetricReport:
    """Execute the full fold x shots x mode matrix and aggregate Dice/IoU."""
    if len(manifest) == 0:
        raise ConfigError("manifest has no entries")
    decoder = create_decoder(config.backend)
    splits = kfold_split(manifest, config.folds, config.seed)
    manifest_order = {sid: i for i, sid in enumerate(manifest.ids())}

    cells: list[ReportCell] = []
    for fold_index, (train_pool, eval_ids) in enumerate(splits):
        eval_samples = [
            load_sample(manifest.entry(sid))
            for sid in sorted(eval_ids, key=manifest_order.get)
        ]
        for shots in config.shot_counts:
            shot_ids = sample_shots(train_pool, shots, config.seed ^ fold_index)
            train_samples = [load_sample(manifest.entry(sid)) for sid in shot_ids]
            train_set = FewShotTrainSet(
                samples=tuple((s.embedding, s.gt_grid64) for s in train_samples)
            )
            clf = fit_classifier(train_set, config.train)
            del train_samples
            coarse = {
                s.entry.id: predict_probability_grid(clf, s.embedding) for s in eval_samples
            }
            for mode in config.modes:
                scores = _score_cell(eval_samples, coarse, mode, config, decoder)
                cells.append(
                    ReportCell(fold=fold_index, shots=shots, mode=mode, scores=tuple(scores))
                )

    cells.extend(_aggregate(cells, config))
    return MetricReport(
        dataset=config.dataset, parameters=config.parameter_lines(), cells=tuple(cells)
    )


def _score_cell(eval_samples, coarse, mode, config, decoder) -> list[SampleScore]:
    def score_one(sample: LoadedSample) -> SampleScore:
        sid = sample.entry.id
        perturb = PerturbConfig(
            max_pixels=config.perturb.max_pixels,
            seed=derive_seed(config.perturb.seed, sid),
            enabled=config.perturb.enabled,
        )
        try:
            pred, _ = predict_sample(
                sample.embedding, coarse[sid], sample.geometry, mode,
                config.morph, perturb, decoder,
            )
            return SampleScore(
                sample_id=sid,
                dice=dice(pred, sample.gt_original),
                iou=iou(pred, sample.gt_original),
            )
        except SelfPromptError as exc:
            raise type(exc)(f"sample {sid!r}: {exc}") from exc

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(score_one, eval_samples))
    return [score_one(s) for s in eval_samples]


def _aggregate(cells: list[ReportCell], config: ExperimentConfig) -> list[ReportCell]:
    aggregates = []
    for shots in config.shot_counts:
        for mode in config.modes:
            pooled: list[SampleScore] = []
            for cell in cells:
                if cell.fold >= 0 and cell.shots == shots and cell.mode == mode:
                    pooled.extend(cell.scores)
            aggregates.append(ReportCell(fold=-1, shots=shots, mode=mode, scores=tuple(pooled)))
    return aggregates


def emit_report(report: MetricReport, csv_path: str | Path, markdown_path: str | Path | None = None) -> None:
    """Write the CSV report (UTF-8, LF) and optionally a markdown summary table."""
    lines = [f"# {key}={value}" for key, value in report.parameters.items()]
    lines.append("dataset,fold,shots,mode,dice_pct,iou_pct,n")
    for cell in list(report.fold_cells()) + list(report.aggregate_cells()):
        fold = "all" if cell.fold < 0 else str(cell.fold)
        lines.append(
            f"{report.dataset},{fold},{cell.shots},{cell.mode.value},"
            f"{cell.mean_dice_pct:.4f},{cell.mean_iou_pct:.4f},{cell.n}"
        )
    Path(csv_path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))

    if markdown_path is not None:
        Path(markdown_path).write_text(_markdown_summary(report), encoding="utf-8")


def _markdown_summary(report: MetricReport) -> str:
    aggregates = report.aggregate_cells()
    shots_seen: list = []
    modes_seen: list = []
    for cell in aggregates:
        if cell.shots not in shots_seen:
            shots_seen.append(cell.shots)
        if cell.mode not in modes_seen:
            modes_seen.append(cell.mode)
    out = [f"# {report.dataset} results", ""]
    for title, attr in (("Mean Dice %", "mean_dice_pct"), ("Mean IoU %", "mean_iou_pct")):
        out.append(f"## {title}")
        out.append("")
        out.append("| shots | " + " | ".join(m.value for m in modes_seen) + " |")
        out.append("|" + "---|" * (len(modes_seen) + 1))
        for shots in shots_seen:
            row = [str(shots)]
            for mode in modes_seen:
                cell = next(c for c in aggregates if c.shots == shots and c.mode == mode)
                row.append(f"{getattr(cell, attr):.2f}" if cell.n else "-")
            out.append("| " + " | ".join(row) + " |")
        out.append("")
    return "\n".join(out)


_PRED_FILL = np.array([200, 170, 40], dtype=np.uint8)
_GT_CONTOUR = np.array([40, 220, 60], dtype=np.uint8)
_BOX_COLOR = np.array([230, 60, 60], dtype=np.uint8)
_POINT_COLOR = np.array([70, 120, 255], dtype=np.uint8)


def emit_overlay(
    image_size: tuple[int, int],
    pred: BinaryMask,
    gt: BinaryMask,
    prompts: PromptSet | None,
    path: str | Path,
) -> None:
    """Inspection PNG: prediction fill, ground-truth contour, point and box marks."""
    height, width = image_size
    if pred.bits.shape != (height, width) or gt.bits.shape != (height, width):
        raise ShapeError("overlay masks must match the requested image size")
    canvas = np.zeros((height, width, 3), dtype=np.uint8)
    canvas[pred.bits] = _PRED_FILL
    contour = gt.bits & ~erode(gt, np.ones((3, 3), dtype=bool), 1).bits
    canvas[contour] = _GT_CONTOUR

    if prompts is not None:
        geometry = GeometryInfo.from_original(height, width)

        def to_original(value: float) -> float:
            if prompts.space is CoordSpace.PADDED_1024:
                return geometry.padded_to_original(value)
            return value

        if prompts.box is not None:
            x0 = int(np.clip(to_original(prompts.box.x_min), 0, width - 1))
            x1 = int(np.clip(to_original(prompts.box.x_max), 0, width - 1))
            y0 = int(np.clip(to_original(prompts.box.y_min), 0, height - 1))
            y1 = int(np.clip(to_original(prompts.box.y_max), 0, height - 1))
            canvas[y0, x0 : x1 + 1] = _BOX_COLOR
            canvas[y1, x0 : x1 + 1] = _BOX_COLOR
            canvas[y0 : y1 + 1, x0] = _BOX_COLOR
            canvas[y0 : y1 + 1, x1] = _BOX_COLOR
        if prompts.point is not None:
            px = int(np.clip(to_original(prompts.point.x), 0, width - 1))
            py = int(np.clip(to_original(prompts.point.y), 0, height - 1))
            arm = max(2, min(height, width) // 60)
            canvas[max(0, py - arm) : py + arm + 1, px] = _POINT_COLOR
            canvas[py, max(0, px - arm) : px + arm + 1] = _POINT_COLOR

    Image.fromarray(canvas, mode="RGB").save(Path(path), format="PNG")
