"""
Occupancy training objective as plain functions with analytic gradients.

geometry:  mean over voxels of two-class cross-entropy (free, occupied)
language:  sum over occupied, labeled voxels of 1 - cos(target, prediction)
total:     geometry + language sum (unit weights)
"""

from typing import NamedTuple, Optional

import numpy as np
from scipy.special import log_softmax, softmax

from .reconstruction import GridSpec, VoxelGrid
from .vocab import is_sentinel

FREE_LOGIT = 0
OCCUPIED_LOGIT = 1


class PredictionVolume:
    """Per-voxel logits (X, Y, Z, 2) and language vectors (X, Y, Z, D')."""

    def __init__(self, geometry, language, spec: Optional[GridSpec] = None):
        g = np.asarray(geometry, dtype=np.float64)
        lang = np.asarray(language, dtype=np.float64)
        if g.ndim != 4 or g.shape[3] != 2:
            raise ValueError(f"Geometry logits must be X x Y x Z x 2, got shape {g.shape}")
        if lang.ndim != 4 or lang.shape[:3] != g.shape[:3]:
            raise ValueError(f"Language volume shape {lang.shape} does not match geometry {g.shape}")
        if spec is not None and tuple(spec.dims) != g.shape[:3]:
            raise ValueError(f"Prediction dims {g.shape[:3]} do not match grid dims {tuple(spec.dims)}")
        self.geometry = g
        self.language = lang
        self.spec = spec

    @property
    def dims(self):
        return self.geometry.shape[:3]

    @property
    def latent_dim(self) -> int:
        return self.language.shape[3]


class LanguageTarget:
    """Grid plus one target vector per label id (row = label id)."""

    def __init__(self, grid: VoxelGrid, target_embeddings):
        t = np.asarray(target_embeddings, dtype=np.float64)
        if t.ndim != 2:
            raise ValueError(f"Target embeddings must be N x D', got shape {t.shape}")
        labels = grid.labels[~is_sentinel(grid.labels)]
        if labels.size and int(labels.max()) >= t.shape[0]:
            raise ValueError(f"Grid label id {int(labels.max())} has no target embedding ({t.shape[0]} rows)")
        self.grid = grid
        self.target_embeddings = t


class LanguageLoss(NamedTuple):
    total: float
    mean: float  # NaN when count == 0
    count: int


def _check_dims(pred: PredictionVolume, grid: VoxelGrid) -> None:
    if tuple(pred.dims) != tuple(grid.labels.shape):
        raise ValueError(f"Prediction dims {tuple(pred.dims)} do not match grid dims {grid.labels.shape}")


def _occupancy_target(gt: VoxelGrid) -> np.ndarray:
    return gt.occupied.astype(np.int64)


def geometry_loss(pred: PredictionVolume, gt: VoxelGrid) -> float:
    _check_dims(pred, gt)
    logp = log_softmax(pred.geometry, axis=3).reshape(-1, 2)
    target = _occupancy_target(gt).reshape(-1)
    return float(-np.mean(logp[np.arange(target.size), target]))


def geometry_loss_grad(pred: PredictionVolume, gt: VoxelGrid) -> np.ndarray:
    """d geometry_loss / d logits, shape (X, Y, Z, 2)."""
    _check_dims(pred, gt)
    p = softmax(pred.geometry, axis=3)
    onehot = np.zeros_like(p)
    target = _occupancy_target(gt)
    onehot[..., OCCUPIED_LOGIT] = target
    onehot[..., FREE_LOGIT] = 1 - target
    return (p - onehot) / target.size


def _counted(pred: PredictionVolume, tgt: LanguageTarget):
    _check_dims(pred, tgt.grid)
    if pred.latent_dim != tgt.target_embeddings.shape[1]:
        raise ValueError(
            f"Language dimension {pred.latent_dim} does not match target dimension "
            f"{tgt.target_embeddings.shape[1]}"
        )
    mask = ~is_sentinel(tgt.grid.labels)
    p = pred.language[mask]
    t = tgt.target_embeddings[tgt.grid.labels[mask].astype(np.int64)]
    pn = np.linalg.norm(p, axis=1)
    if np.any(pn == 0):
        bad = tuple(int(x) for x in np.argwhere(mask)[np.flatnonzero(pn == 0)[0]])
        raise ValueError(f"Zero-norm predicted language vector at voxel {bad}")
    tn = np.linalg.norm(t, axis=1)
    return mask, p, t, pn, tn


def language_loss(pred: PredictionVolume, tgt: LanguageTarget) -> LanguageLoss:
    """Sum of 1 - cos over occupied voxels that carry a label."""
    _, p, t, pn, tn = _counted(pred, tgt)
    cos = np.sum(p * t, axis=1) / (pn * tn)
    total = float(np.sum(1.0 - cos))
    count = int(cos.size)
    return LanguageLoss(total, total / count if count else float("nan"), count)


def language_loss_grad(pred: PredictionVolume, tgt: LanguageTarget) -> np.ndarray:
    """d language_loss.total / d language volume, shape (X, Y, Z, D')."""
    mask, p, t, pn, tn = _counted(pred, tgt)
    cos = np.sum(p * t, axis=1) / (pn * tn)
    g = -(t / (pn * tn)[:, None] - cos[:, None] * p / (pn ** 2)[:, None])
    out = np.zeros_like(pred.language)
    out[mask] = g
    return out


def total_loss(pred: PredictionVolume, gt: VoxelGrid, tgt: LanguageTarget) -> float:
    return geometry_loss(pred, gt) + language_loss(pred, tgt).total
