"""
End-to-end label transfer: segment -> label points -> aggregate -> voxelize.

Frames carry their own vocabularies; point labels are remapped into one
sequence vocabulary before aggregation so votes from different frames count
for the same text label.
"""

import logging
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .geometry import CameraModel, EgoPose
from .pixels import FeatureMap, SegmentationMap, segment_from_features
from .points import PointCloud, assign_point_labels, lift_point_features, select_cameras
from .reconstruction import (
    BoundingBox3D,
    GridSpec,
    SceneAggregate,
    Strategy,
    VoxelGrid,
    aggregate,
    binary_occupancy,
    voxel_modelview_labels,
    voxelize,
    voxelize_features,
    voxelize_majority,
)
from .vocab import (
    LABEL_DTYPE,
    UNLABELED,
    EmbeddingMatrix,
    VocabScope,
    VocabularySet,
    merge_sequence_vocab,
    remap_labels,
)

logger = logging.getLogger(__name__)


class SensorSequence(NamedTuple):
    """One drive: shared camera rig, per-frame clouds, poses and boxes."""
    rig: Sequence[CameraModel]
    poses: Sequence[EgoPose]
    clouds: Sequence[PointCloud]
    boxes: Sequence[BoundingBox3D]


class PipelineResult(NamedTuple):
    grid: VoxelGrid
    aggregate: SceneAggregate
    labeled: List[PointCloud]
    vocab: VocabularySet


def frame_vocab(maps: Sequence[SegmentationMap], frame_index: int) -> VocabularySet:
    vocabs = [m.vocab for m in maps]
    if any(v is None for v in vocabs):
        raise ValueError(f"Frame {frame_index}: every segmentation map needs a vocabulary")
    for v in vocabs[1:]:
        if v.labels != vocabs[0].labels:
            raise ValueError(f"Frame {frame_index}: cameras disagree on the vocabulary")
    return vocabs[0]


def sequence_vocab(vocabs: Sequence[VocabularySet]) -> VocabularySet:
    """The shared vocabulary when all frames agree, else the ordered union."""
    if vocabs and all(v.labels == vocabs[0].labels for v in vocabs):
        return vocabs[0]
    return merge_sequence_vocab(vocabs)


def segment_sequence(
    features: Dict[int, Sequence[FeatureMap]],
    frame_vocabs: Dict[int, VocabularySet],
    emb: EmbeddingMatrix,
    scope: VocabScope = VocabScope.SEQUENCE,
) -> Dict[int, List[SegmentationMap]]:
    """
    Classify per-pixel features against each frame's own vocabulary
    (FRAME scope) or against the union of all frame vocabularies
    (SEQUENCE scope); DATASET scope uses every row of `emb`. `emb` must
    carry a vocabulary with rows for every label used.
    """
    scope = VocabScope(scope)
    frames = sorted(features)
    missing = [k for k in frames if k not in frame_vocabs]
    if missing:
        raise ValueError(f"No vocabulary for frames {missing}")
    if scope == VocabScope.SEQUENCE:
        merged = merge_sequence_vocab([frame_vocabs[k] for k in frames])
        scoped = {k: emb.subset(merged) for k in frames}
    elif scope == VocabScope.FRAME:
        scoped = {k: emb.subset(frame_vocabs[k]) for k in frames}
    else:
        scoped = {k: emb for k in frames}
    return {k: [segment_from_features(f, scoped[k]) for f in features[k]] for k in frames}


def label_sequence(
    seq: SensorSequence,
    maps: Dict[int, Sequence[SegmentationMap]],
    workers: Optional[int] = None,
) -> List[PointCloud]:
    """assign_point_labels for every frame; labels stay in each frame's own vocabulary."""
    out = []
    for cloud in seq.clouds:
        if cloud.frame_index not in maps:
            raise ValueError(f"No segmentation maps for frame {cloud.frame_index}")
        out.append(assign_point_labels(cloud, seq.rig, maps[cloud.frame_index], workers))
    return out


def to_vocab(clouds: Sequence[PointCloud], vocab: VocabularySet) -> List[PointCloud]:
    out = []
    for c in clouds:
        if c.vocab is None or c.vocab.labels == vocab.labels:
            out.append(c.with_labels(c.labels, vocab))
        else:
            out.append(c.with_labels(remap_labels(c.labels, c.vocab, vocab), vocab))
    return out


def _target(seq: SensorSequence, target_frame: Optional[int]) -> int:
    frames = sorted(c.frame_index for c in seq.clouds)
    if not frames:
        raise ValueError("Sequence has no frames")
    return frames[-1] if target_frame is None else int(target_frame)


def label_and_merge(
    seq: SensorSequence,
    maps: Dict[int, Sequence[SegmentationMap]],
    workers: Optional[int] = None,
) -> Tuple[List[PointCloud], VocabularySet]:
    """Labeled clouds of every frame, remapped into one sequence vocabulary."""
    frames = sorted(c.frame_index for c in seq.clouds)
    vocab = sequence_vocab([frame_vocab(maps[k], k) for k in frames if k in maps])
    return to_vocab(label_sequence(seq, maps, workers), vocab), vocab


def modelview_grid(
    agg: SceneAggregate,
    grid: GridSpec,
    rig: Sequence[CameraModel],
    target_maps: Sequence[SegmentationMap],
    vocab: VocabularySet,
    workers: Optional[int] = None,
) -> VoxelGrid:
    """Occupancy of the majority grid, labeled by projecting voxel centers into the target frame's maps."""
    occ = binary_occupancy(voxelize_majority(agg, grid, workers))
    mv = voxel_modelview_labels(occ, rig, target_maps, workers)
    src = frame_vocab(target_maps, agg.target_frame)
    labels = remap_labels(mv.labels, src, vocab) if src.labels != vocab.labels else mv.labels
    return VoxelGrid(grid, labels, vocab)


def run_pipeline(
    seq: SensorSequence,
    maps: Dict[int, Sequence[SegmentationMap]],
    grid: GridSpec,
    strategy: Strategy = Strategy.MAJORITY,
    target_frame: Optional[int] = None,
    window: Optional[int] = None,
    workers: Optional[int] = None,
) -> PipelineResult:
    """
    Build the labeled occupancy grid of `target_frame` (default: last frame).
    MODELVIEW labels the majority grid's occupancy from the target frame's
    cameras only.
    """
    strategy = Strategy(strategy)
    target = _target(seq, target_frame)
    labeled, vocab = label_and_merge(seq, maps, workers)
    agg = aggregate(labeled, seq.poses, seq.boxes, target, window=window, workers=workers)
    if strategy == Strategy.MODELVIEW:
        if target not in maps:
            raise ValueError(f"No segmentation maps for target frame {target}")
        out = modelview_grid(agg, grid, seq.rig, maps[target], vocab, workers)
    else:
        out = voxelize(agg, grid, strategy, workers)
    logger.info(
        "pipeline (%s): %d occupied voxels from %d points", strategy.value, int(out.occupied.sum()), len(agg)
    )
    return PipelineResult(out, agg, labeled, vocab)


def run_feature_pipeline(
    seq: SensorSequence,
    features: Dict[int, Sequence[FeatureMap]],
    emb: EmbeddingMatrix,
    grid: GridSpec,
    target_frame: Optional[int] = None,
    window: Optional[int] = None,
    workers: Optional[int] = None,
) -> VoxelGrid:
    """Feature-intermediate baseline: lift features to points, average per voxel, classify."""
    target = _target(seq, target_frame)
    lifted = []
    for cloud in seq.clouds:
        if cloud.frame_index not in features:
            raise ValueError(f"No feature maps for frame {cloud.frame_index}")
        lifted.append(lift_point_features(cloud, seq.rig, features[cloud.frame_index], workers))
    unlabeled = [c.with_labels(np.zeros(len(c), dtype=LABEL_DTYPE), None) for c in seq.clouds]
    agg = aggregate(unlabeled, seq.poses, seq.boxes, target, window=window, features=lifted, workers=workers)
    return voxelize_features(agg, grid, emb)


def observed_voxels(
    seq: SensorSequence,
    grid: GridSpec,
    target_frame: Optional[int] = None,
    window: Optional[int] = None,
    workers: Optional[int] = None,
) -> np.ndarray:
    """Voxels of the target grid holding a camera-visible LiDAR return of any frame."""
    target = _target(seq, target_frame)
    marked = []
    for cloud in seq.clouds:
        cam_idx, _ = select_cameras(cloud.points, seq.rig)
        marked.append(cloud.with_labels(np.where(cam_idx >= 0, 0, UNLABELED).astype(LABEL_DTYPE)))
    agg = aggregate(marked, seq.poses, seq.boxes, target, window=window, workers=workers)
    return voxelize_majority(agg, grid, workers).labels == 0
