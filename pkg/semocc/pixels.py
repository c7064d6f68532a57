"""
Per-camera segmentation and feature maps.

Pixel (i, j) covers [i, i+1) x [j, j+1); nearest-neighbor sampling is floor.
A sample is in bounds only for 0 < u < width and 0 < v < height (strict).
"""

from typing import Optional

import numpy as np

from .vocab import (
    LABEL_DTYPE,
    UNLABELED,
    EmbeddingMatrix,
    VocabularySet,
    classify_many,
    is_sentinel,
)


class SegmentationMap:
    """H x W label ids into `vocab`."""

    def __init__(self, data, vocab: Optional[VocabularySet] = None):
        d = np.array(data, dtype=LABEL_DTYPE)
        if d.ndim != 2 or d.shape[0] <= 0 or d.shape[1] <= 0:
            raise ValueError(f"Segmentation map must be a non-empty H x W array, got shape {d.shape}")
        if vocab is not None:
            bad = (~is_sentinel(d)) & (d >= len(vocab))
            if np.any(bad):
                raise ValueError(
                    f"Segmentation map has label id {int(d[bad][0])} >= vocabulary size {len(vocab)}"
                )
        d.setflags(write=False)
        self.data = d
        self.vocab = vocab

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


class FeatureMap:
    """H x W x D per-pixel features at image resolution."""

    def __init__(self, data):
        d = np.array(data, dtype=np.float64)
        if d.ndim != 3 or min(d.shape) <= 0:
            raise ValueError(f"Feature map must be a non-empty H x W x D array, got shape {d.shape}")
        d.setflags(write=False)
        self.data = d

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def segment_from_features(f: FeatureMap, emb: EmbeddingMatrix) -> SegmentationMap:
    """Per-pixel classify; zero-norm pixels become UNLABELED."""
    if f.channels != emb.dim:
        raise ValueError(f"Feature map has {f.channels} channels but embeddings have dimension {emb.dim}")
    labels, _ = classify_many(f.data.reshape(-1, f.channels), emb)
    return SegmentationMap(labels.reshape(f.height, f.width), emb.vocab)


def in_bounds(width: int, height: int, uv) -> np.ndarray:
    """Strict in-bounds mask; NaN coordinates are out of bounds."""
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    with np.errstate(invalid="ignore"):
        return (uv[:, 0] > 0) & (uv[:, 0] < width) & (uv[:, 1] > 0) & (uv[:, 1] < height)


def pixel_index(uv) -> np.ndarray:
    """Integer (col, row) of the containing pixel for in-bounds coordinates."""
    return np.floor(np.asarray(uv, dtype=np.float64)).astype(np.int64)


def sample_nearest(s: SegmentationMap, u: float, v: float) -> int:
    if not in_bounds(s.width, s.height, (u, v))[0]:
        raise ValueError(f"Sample ({u}, {v}) outside the open image rectangle {s.width}x{s.height}")
    return int(s.data[int(np.floor(v)), int(np.floor(u))])


def sample_nearest_many(s: SegmentationMap, uv) -> np.ndarray:
    """Vectorized sample_nearest; out-of-bounds rows get UNLABELED."""
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    out = np.full(uv.shape[0], UNLABELED, dtype=LABEL_DTYPE)
    ok = in_bounds(s.width, s.height, uv)
    ij = pixel_index(uv[ok])
    out[ok] = s.data[ij[:, 1], ij[:, 0]]
    return out


def sample_features_many(f: FeatureMap, uv) -> np.ndarray:
    """Nearest-neighbor feature sampling; out-of-bounds rows are zero vectors."""
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    out = np.zeros((uv.shape[0], f.channels))
    ok = in_bounds(f.width, f.height, uv)
    ij = pixel_index(uv[ok])
    out[ok] = f.data[ij[:, 1], ij[:, 0]]
    return out
