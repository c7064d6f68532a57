"""
LiDAR label transfer.

Each point is projected into every camera; among cameras where the point has
depth > 0 and lands strictly inside the image, the one with the smallest depth
wins (ties: smallest camera index). The winning camera's map is sampled with
nearest-neighbor lookup. Points seen by no camera keep their geometry and get
UNLABELED. The rule is per point, so any chunking gives identical output.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import CameraModel, project_points
from .parallel import map_chunks
from .pixels import (
    FeatureMap,
    SegmentationMap,
    in_bounds,
    sample_features_many,
    sample_nearest_many,
)
from .vocab import LABEL_DTYPE, UNLABELED, VocabularySet

logger = logging.getLogger(__name__)


class PointCloud:
    """One frame of ego-frame points with optional parallel label ids."""

    def __init__(
        self,
        frame_index: int,
        points,
        labels=None,
        vocab: Optional[VocabularySet] = None,
    ):
        p = np.array(points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(p)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(p), axis=1))[0])
            raise ValueError(f"Point {bad} of frame {frame_index} is not finite")
        if labels is not None:
            labels = np.array(labels, dtype=LABEL_DTYPE).reshape(-1)
            if labels.shape[0] != p.shape[0]:
                raise ValueError(f"{labels.shape[0]} labels for {p.shape[0]} points")
            labels.setflags(write=False)
        p.setflags(write=False)
        self.frame_index = int(frame_index)
        self.points = p
        self.labels = labels
        self.vocab = vocab

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None

    def with_labels(self, labels, vocab: Optional[VocabularySet] = None) -> "PointCloud":
        return PointCloud(self.frame_index, self.points, labels, vocab if vocab is not None else self.vocab)


def check_rig(rig: Sequence[CameraModel], maps: Sequence) -> None:
    if len(rig) != len(maps):
        raise ValueError(f"Camera rig has {len(rig)} cameras but {len(maps)} maps were given")
    if not rig:
        raise ValueError("Camera rig is empty")
    for i, (cam, m) in enumerate(zip(rig, maps)):
        if (m.width, m.height) != (cam.width, cam.height):
            raise ValueError(
                f"Map {i} is {m.width}x{m.height} but camera {i} is {cam.width}x{cam.height}"
            )


def select_cameras(points, rig: Sequence[CameraModel]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Min-depth camera per point. Returns (camera index (N,), uv (N, 2));
    camera index is -1 where no camera sees the point.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = p.shape[0]
    depths = np.full((len(rig), n), np.inf)
    uvs = np.empty((len(rig), n, 2))
    for i, cam in enumerate(rig):
        uv, depth = project_points(cam, p)
        ok = (depth > 0) & in_bounds(cam.width, cam.height, uv)
        depths[i, ok] = depth[ok]
        uvs[i] = uv
    best = np.argmin(depths, axis=0)  # first minimum = smallest camera index
    seen = np.isfinite(depths[best, np.arange(n)])
    cam_idx = np.where(seen, best, -1)
    uv_best = uvs[best, np.arange(n)]
    uv_best[~seen] = np.nan
    return cam_idx, uv_best


def label_points(points, rig: Sequence[CameraModel], maps: Sequence[SegmentationMap]) -> np.ndarray:
    """Labels for raw ego-frame points; no rig validation (callers check)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam_idx, uv = select_cameras(points, rig)
    out = np.full(points.shape[0], UNLABELED, dtype=LABEL_DTYPE)
    for i, m in enumerate(maps):
        sel = cam_idx == i
        if np.any(sel):
            out[sel] = sample_nearest_many(m, uv[sel])
    return out


def assign_point_labels(
    cloud: PointCloud,
    rig: Sequence[CameraModel],
    maps: Sequence[SegmentationMap],
    workers: Optional[int] = None,
) -> PointCloud:
    """Label every point from the nearest camera that sees it; order is preserved."""
    check_rig(rig, maps)
    vocab = maps[0].vocab
    pts = cloud.points
    parts: List[np.ndarray] = map_chunks(
        lambda a, b: label_points(pts[a:b], rig, maps), len(pts), workers
    )
    labels = np.concatenate(parts) if parts else np.empty(0, dtype=LABEL_DTYPE)
    logger.debug(
        "frame %d: %d/%d points labeled", cloud.frame_index, int(np.sum(labels != UNLABELED)), len(labels)
    )
    return cloud.with_labels(labels, vocab)


def lift_point_features(
    cloud: PointCloud,
    rig: Sequence[CameraModel],
    features: Sequence[FeatureMap],
    workers: Optional[int] = None,
) -> np.ndarray:
    """
    Image features sampled onto points with the same camera selection as
    assign_point_labels (feature-intermediate baseline). Unseen points get zeros.
    """
    check_rig(rig, features)
    dims = {f.channels for f in features}
    if len(dims) != 1:
        raise ValueError(f"Feature maps disagree on channel count: {sorted(dims)}")
    pts = cloud.points
    channels = features[0].channels

    def chunk(a: int, b: int) -> np.ndarray:
        cam_idx, uv = select_cameras(pts[a:b], rig)
        out = np.zeros((b - a, channels))
        for i, f in enumerate(features):
            sel = cam_idx == i
            if np.any(sel):
                out[sel] = sample_features_many(f, uv[sel])
        return out

    parts = map_chunks(chunk, len(pts), workers)
    return np.concatenate(parts, axis=0)
