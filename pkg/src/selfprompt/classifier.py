"""Pixel-wise linear classifier trained on frozen-encoder embedding pixels.

Each embedding grid cell carries a 256-dimensional feature vector z; the
classifier scores it with sigmoid(w . z + b). Training minimizes the summed
per-pixel cross-entropy, averaged over training images, plus an L2 penalty
on the weights (bias excluded):

    J(w, b) = (1/k) * sum_q sum_pixels -[t log p + (1 - t) log(1 - p)]
              + lambda * ||w||^2,        p = sigmoid(w . z + b)

with p clamped to [1e-12, 1 - 1e-12] so the objective stays finite for any
finite classifier. The objective is strictly convex, so every convergent
solver reaches the same optimum; the one here is deterministic full-batch
gradient descent with Armijo backtracking line search from zero init.

Per-image partial sums are combined with exactly-rounded summation
(math.fsum), which makes the whole optimization bit-for-bit invariant to
the order of training samples.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import EMBED_CHANNELS, EMBED_SIZE, BinaryMask, CoordSpace, EmbeddingGrid, ProbabilityGrid
from .errors import FormatError, ShapeError, TrainingError
from .rng import SplitMix64

PROB_EPS = 1e-12

_SPLC_MAGIC = b"SPLC"
_SPLC_VERSION = 1
_SPLC_HEADER = struct.Struct("<4sII")

_ARMIJO_C = 1e-4
_MIN_STEP = 1e-20
_Z_REFRESH_PERIOD = 64


@dataclass(frozen=True, eq=False)
class PixelClassifier:
    """Learned state of the self-prompt unit: weight vector w and bias b."""

    weights: np.ndarray  # float64, shape (256,)
    bias: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (EMBED_CHANNELS,):
            raise ShapeError(f"weights must have shape ({EMBED_CHANNELS},), got {w.shape}")
        if not np.isfinite(w).all() or not math.isfinite(self.bias):
            raise TrainingError("classifier parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zeros(cls) -> "PixelClassifier":
        return cls(weights=np.zeros(EMBED_CHANNELS), bias=0.0)


@dataclass(frozen=True)
class TrainConfig:
    max_iterations: int = 1000
    convergence_tolerance: float = 1e-6  # relative objective decrease
    regularization_weight: float = 0.5  # lambda on ||w||^2, bias excluded
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise TrainingError("max_iterations must be >= 1")
        if self.convergence_tolerance <= 0:
            raise TrainingError("convergence_tolerance must be > 0")
        if self.regularization_weight < 0:
            raise TrainingError("regularization_weight must be >= 0")


@dataclass(frozen=True, eq=False)
class FewShotTrainSet:
    """k embedding/mask pairs; masks must be 64x64 in grid-64 space."""

    samples: tuple[tuple[EmbeddingGrid, BinaryMask], ...]

    def __post_init__(self):
        if len(self.samples) < 1:
            raise ShapeError("training set must contain at least one sample")
        for index, (_, mask) in enumerate(self.samples):
            if mask.bits.shape != (EMBED_SIZE, EMBED_SIZE):
                raise ShapeError(
                    f"training mask {index} must be {EMBED_SIZE}x{EMBED_SIZE}, "
                    f"got {mask.bits.shape}"
                )
            if mask.space is not CoordSpace.GRID_64:
                raise ShapeError(f"training mask {index} must be in grid-64 space")

    @property
    def shot_count(self) -> int:
        return len(self.samples)


def _flatten_sample(embedding: EmbeddingGrid, mask: BinaryMask):
    features = np.ascontiguousarray(
        embedding.values.reshape(EMBED_CHANNELS, -1).T, dtype=np.float64
    )
    labels = mask.bits.reshape(-1).astype(np.float64)
    return features, labels


def _ce_sum(z: np.ndarray, labels: np.ndarray) -> float:
    p = np.clip(expit(z), PROB_EPS, 1.0 - PROB_EPS)
    return float(-np.sum(labels * np.log(p) + (1.0 - labels) * np.log1p(-p)))


def _objective_from_z(z_list, label_list, alpha: float, lam: float, w: np.ndarray) -> float:
    ce_parts = [_ce_sum(z, t) for z, t in zip(z_list, label_list)]
    return alpha * math.fsum(ce_parts) + lam * float(w @ w)


def _fsum_columns(parts: list[np.ndarray]) -> np.ndarray:
    if len(parts) == 1:
        return parts[0].astype(np.float64, copy=True)
    stacked = np.vstack(parts)
    return np.array([math.fsum(stacked[:, j]) for j in range(stacked.shape[1])])


def _minimize(feature_list, label_list, alpha, lam, config, w0, b0):
    """Armijo-backtracking gradient descent on the regularized objective."""
    w = np.asarray(w0, dtype=np.float64).copy()
    b = float(b0)
    z_list = [X @ w + b for X in feature_list]
    f = _objective_from_z(z_list, label_list, alpha, lam, w)
    if not math.isfinite(f):
        raise TrainingError("non-finite objective", iteration=0)

    step = 1.0
    for iteration in range(1, config.max_iterations + 1):
        resid = [expit(z) - t for z, t in zip(z_list, label_list)]
        gw_parts = [X.T @ r for X, r in zip(feature_list, resid)]
        gw = alpha * _fsum_columns(gw_parts) + 2.0 * lam * w
        gb = alpha * math.fsum(float(r.sum()) for r in resid)
        grad_norm2 = float(gw @ gw) + gb * gb
        if grad_norm2 == 0.0:
            break

        # One matvec per sample makes every line-search trial O(N) vector work.
        dz_list = [X @ gw + gb for X in feature_list]

        trial_step = step * 2.0
        accepted = False
        while trial_step >= _MIN_STEP:
            w_trial = w - trial_step * gw
            z_trial = [z - trial_step * dz for z, dz in zip(z_list, dz_list)]
            f_trial = _objective_from_z(z_trial, label_list, alpha, lam, w_trial)
            if not math.isfinite(f_trial):
                raise TrainingError("non-finite objective", iteration=iteration)
            if f_trial <= f - _ARMIJO_C * trial_step * grad_norm2:
                accepted = True
                break
            trial_step *= 0.5
        if not accepted:
            break

        w = w_trial
        b -= trial_step * gb
        if iteration % _Z_REFRESH_PERIOD == 0:
            z_list = [X @ w + b for X in feature_list]
        else:
            z_list = z_trial
        decrease = f - f_trial
        f = f_trial
        step = trial_step
        if decrease <= config.convergence_tolerance * max(abs(f), 1e-300):
            break

    return w, b


def objective(
    classifier: PixelClassifier, train_set: FewShotTrainSet, config: TrainConfig
) -> float:
    """Regularized objective J(w, b) on a training set."""
    alpha = 1.0 / train_set.shot_count
    ce_parts = []
    for embedding, mask in train_set.samples:
        features, labels = _flatten_sample(embedding, mask)
        ce_parts.append(_ce_sum(features @ classifier.weights + classifier.bias, labels))
    lam = config.regularization_weight
    return alpha * math.fsum(ce_parts) + lam * float(classifier.weights @ classifier.weights)


def pixel_objective(
    classifier: PixelClassifier,
    features: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    pixel_weight: float = 1.0,
) -> float:
    """Objective on a flat pixel matrix (features N x 256, labels N in {0, 1})."""
    features, labels = _check_pixels(features, labels)
    ce = _ce_sum(features @ classifier.weights + classifier.bias, labels)
    lam = config.regularization_weight
    return pixel_weight * ce + lam * float(classifier.weights @ classifier.weights)


def _check_pixels(features: np.ndarray, labels: np.ndarray):
    features = np.ascontiguousarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if features.ndim != 2 or features.shape[1] != EMBED_CHANNELS:
        raise ShapeError(f"features must be N x {EMBED_CHANNELS}, got {features.shape}")
    if features.shape[0] != labels.shape[0]:
        raise ShapeError(
            f"feature/label count mismatch: {features.shape[0]} vs {labels.shape[0]}"
        )
    return features, labels


def fit_classifier(
    train_set: FewShotTrainSet,
    config: TrainConfig,
    *,
    initial: tuple[np.ndarray, float] | None = None,
) -> PixelClassifier:
    """Fit the classifier on a few-shot training set.

    Deterministic: identical (train_set, config) give a bit-identical
    classifier, and permuting the samples leaves the result unchanged.
    `initial` overrides the zero init (used to verify convexity; the
    production path always starts from zero).
    """
    flat = [_flatten_sample(e, m) for e, m in train_set.samples]
    feature_list = [f for f, _ in flat]
    label_list = [t for _, t in flat]
    alpha = 1.0 / train_set.shot_count
    w0, b0 = initial if initial is not None else (np.zeros(EMBED_CHANNELS), 0.0)
    w, b = _minimize(
        feature_list, label_list, alpha, config.regularization_weight, config, w0, b0
    )
    return PixelClassifier(weights=w, bias=b)


def fit_pixel_classifier(
    features: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    pixel_weight: float = 1.0,
    *,
    initial: tuple[np.ndarray, float] | None = None,
) -> PixelClassifier:
    """Fit on a flat pixel matrix; same optimizer as fit_classifier."""
    features, labels = _check_pixels(features, labels)
    w0, b0 = initial if initial is not None else (np.zeros(EMBED_CHANNELS), 0.0)
    w, b = _minimize([features], [labels], pixel_weight, config.regularization_weight, config, w0, b0)
    return PixelClassifier(weights=w, bias=b)


def seeded_random_init(seed: int, scale: float = 0.01) -> tuple[np.ndarray, float]:
    """Small random starting point from the portable generator (for convexity checks)."""
    gen = SplitMix64(seed)
    draws = np.array(
        [(gen.next_u64() / 2.0**64) * 2.0 - 1.0 for _ in range(EMBED_CHANNELS + 1)]
    )
    return draws[:EMBED_CHANNELS] * scale, float(draws[-1] * scale)


def predict_probability_grid(
    classifier: PixelClassifier, embedding: EmbeddingGrid
) -> ProbabilityGrid:
    """Per-cell sigmoid(w . z + b) over the 64x64 embedding grid."""
    z = (
        np.tensordot(classifier.weights, embedding.values.astype(np.float64), axes=([0], [0]))
        + classifier.bias
    )
    return ProbabilityGrid(values=expit(z), space=CoordSpace.GRID_64)


def threshold_mask(probs: ProbabilityGrid) -> BinaryMask:
    """Binarize at strictly > 0.5; exactly 0.5 is background."""
    return BinaryMask(bits=probs.values > 0.5, space=probs.space)


def save_classifier(classifier: PixelClassifier, path: str | Path) -> None:
    """Write the SPLC file: magic, version, dim, then w and b as 32-bit reals."""
    header = _SPLC_HEADER.pack(_SPLC_MAGIC, _SPLC_VERSION, EMBED_CHANNELS)
    w32 = np.asarray(classifier.weights, dtype="<f4").tobytes()
    b32 = np.float32(classifier.bias).astype("<f4").tobytes()
    Path(path).write_bytes(header + w32 + b32)


def load_classifier(path: str | Path) -> PixelClassifier:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read classifier file {path}: {exc}") from exc
    if len(blob) < _SPLC_HEADER.size:
        raise FormatError(f"{path}: truncated SPLC header")
    magic, version, dim = _SPLC_HEADER.unpack_from(blob)
    if magic != _SPLC_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {_SPLC_MAGIC!r}")
    if version != _SPLC_VERSION:
        raise FormatError(f"{path}: unsupported SPLC version {version}")
    if dim != EMBED_CHANNELS:
        raise FormatError(f"{path}: classifier dim {dim}, expected {EMBED_CHANNELS}")
    expected = _SPLC_HEADER.size + 4 * (EMBED_CHANNELS + 1)
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(blob)}")
    values = np.frombuffer(blob, dtype="<f4", offset=_SPLC_HEADER.size)
    return PixelClassifier(
        weights=values[:EMBED_CHANNELS].astype(np.float64),
        bias=float(values[EMBED_CHANNELS]),
    )
