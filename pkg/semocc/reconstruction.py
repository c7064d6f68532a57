"""
Scene reconstruction and voxelization.

- aggregate: multi-frame points into the target frame's ego coordinates;
  points inside moving boxes are re-posed through box-local coordinates.
- voxelize_majority / voxelize_nearest: point-based labeling strategies.
- voxel_modelview_labels: voxel centers projected like points, with no
  occlusion reasoning between voxels (the baseline being compared against).
- Voxel of p = floor((p - origin) / voxel_size); points outside the volume
  are discarded. Labels are laid out X-major, then Y, Z-minor.
"""

import logging
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .geometry import (
    CameraModel,
    EgoPose,
    RigidTransform,
    apply,
    compose,
    invert,
    yaw_transform,
)
from .parallel import map_chunks
from .pixels import SegmentationMap
from .points import PointCloud, check_rig, label_points
from .vocab import (
    FREE,
    LABEL_DTYPE,
    UNLABELED,
    EmbeddingMatrix,
    VocabScope,
    VocabularySet,
    classify_many,
    is_sentinel,
)

logger = logging.getLogger(__name__)

OCCUPIED = 0
OCCUPANCY_VOCAB = VocabularySet(["occupied"], scope=VocabScope.DATASET)

# Voting key = flat voxel index * LABEL_SPAN + label id
LABEL_SPAN = 1 << 16


class Strategy(str, Enum):
    MAJORITY = "majority"
    NEAREST = "nearest"
    MODELVIEW = "modelview"


class GridSpec(NamedTuple):
    origin: Tuple[float, float, float]  # meters, target-frame ego coordinates
    voxel_size: float                   # meters
    dims: Tuple[int, int, int]          # (X, Y, Z)

    @property
    def n_voxels(self) -> int:
        return int(self.dims[0]) * int(self.dims[1]) * int(self.dims[2])

    @property
    def upper(self) -> Tuple[float, float, float]:
        return tuple(float(o + d * self.voxel_size) for o, d in zip(self.origin, self.dims))

    def voxel_coords(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """(ijk (N, 3) int64, inside (N,) bool)."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        ijk = np.floor((p - np.asarray(self.origin)) / self.voxel_size).astype(np.int64)
        inside = np.all((ijk >= 0) & (ijk < np.asarray(self.dims)), axis=1)
        return ijk, inside

    def flat_index(self, ijk) -> np.ndarray:
        ijk = np.asarray(ijk, dtype=np.int64).reshape(-1, 3)
        return (ijk[:, 0] * self.dims[1] + ijk[:, 1]) * self.dims[2] + ijk[:, 2]

    def unravel(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(flat, dtype=np.int64), self.dims), axis=1)

    def centers(self, flat) -> np.ndarray:
        return np.asarray(self.origin) + (self.unravel(flat) + 0.5) * self.voxel_size

    def matches(self, other: "GridSpec", tol: float = 1e-6) -> bool:
        """Same grid up to float32 storage precision."""
        return (
            tuple(int(d) for d in self.dims) == tuple(int(d) for d in other.dims)
            and np.allclose(self.origin, other.origin, atol=tol, rtol=0)
            and abs(self.voxel_size - other.voxel_size) <= tol
        )


def make_grid_spec(origin, voxel_size: float, dims) -> GridSpec:
    o = tuple(float(x) for x in origin)
    d = tuple(int(x) for x in dims)
    if len(o) != 3 or len(d) != 3:
        raise ValueError("Grid origin and dims must have three components")
    if not voxel_size > 0:
        raise ValueError(f"Voxel size must be positive, got {voxel_size}")
    if min(d) <= 0:
        raise ValueError(f"Grid dims must be positive, got {d}")
    return GridSpec(o, float(voxel_size), d)


# 200 x 200 x 16 voxels of 0.4 m over [-40, 40]^2 x [-1, 5.4]
DEFAULT_GRID = make_grid_spec((-40.0, -40.0, -1.0), 0.4, (200, 200, 16))
assert DEFAULT_GRID.dims == (200, 200, 16)
assert np.allclose(DEFAULT_GRID.upper, (40.0, 40.0, 5.4))


class BoundingBox3D(NamedTuple):
    track_id: str
    frame_index: int
    center: Tuple[float, float, float]  # ego frame, meters
    size: Tuple[float, float, float]    # length, width, height
    yaw: float                          # radians about +z
    is_moving: bool


def make_box(track_id, frame_index: int, center, size, yaw: float, is_moving: bool) -> BoundingBox3D:
    s = tuple(float(x) for x in size)
    if len(s) != 3 or min(s) <= 0:
        raise ValueError(f"Box {track_id}@{frame_index}: size components must be positive, got {s}")
    c = tuple(float(x) for x in center)
    return BoundingBox3D(str(track_id), int(frame_index), c, s, float(yaw), bool(is_moving))


def box_pose(box: BoundingBox3D) -> RigidTransform:
    """ego_from_box."""
    return yaw_transform(box.yaw, box.center)


def points_in_box(box: BoundingBox3D, points) -> np.ndarray:
    """Closed containment test in box-local coordinates."""
    local = apply(invert(box_pose(box)), points)
    return np.all(np.abs(local) <= np.asarray(box.size) / 2.0, axis=1)


class VoxelGrid:
    """X x Y x Z label ids; FREE marks voxels without points."""

    def __init__(self, spec: GridSpec, labels, vocab: Optional[VocabularySet] = None):
        lab = np.array(labels, dtype=LABEL_DTYPE)
        if lab.size != spec.n_voxels:
            raise ValueError(f"Grid has {lab.size} labels but spec holds {spec.n_voxels} voxels")
        lab = lab.reshape(spec.dims)
        lab.setflags(write=False)
        self.spec = spec
        self.labels = lab
        self.vocab = vocab

    @property
    def occupied(self) -> np.ndarray:
        return self.labels != FREE

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.labels == FREE) | (self.labels == OCCUPIED))) and self.vocab == OCCUPANCY_VOCAB

    def __eq__(self, other) -> bool:
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return self.spec.matches(other.spec) and np.array_equal(self.labels, other.labels)

    def __hash__(self) -> int:
        return hash((self.spec.dims, self.labels.tobytes()))


class SceneAggregate:
    """Labeled points of many frames in the target frame's ego coordinates."""

    def __init__(
        self,
        target_frame: int,
        points,
        labels,
        source_frames,
        vocab: Optional[VocabularySet] = None,
        features: Optional[np.ndarray] = None,
    ):
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        lab = np.asarray(labels, dtype=LABEL_DTYPE).reshape(-1)
        src = np.asarray(source_frames, dtype=np.int64).reshape(-1)
        if not (p.shape[0] == lab.shape[0] == src.shape[0]):
            raise ValueError("Aggregate points, labels and source frames differ in length")
        if features is not None and features.shape[0] != p.shape[0]:
            raise ValueError("Aggregate features and points differ in length")
        self.target_frame = int(target_frame)
        self.points = p
        self.labels = lab
        self.source_frames = src
        self.vocab = vocab
        self.features = features

    def __len__(self) -> int:
        return self.points.shape[0]


def _shared_vocab(clouds: Sequence[PointCloud]) -> Optional[VocabularySet]:
    vocabs = [c.vocab for c in clouds if c.vocab is not None]
    for v in vocabs[1:]:
        if v.labels != vocabs[0].labels:
            raise ValueError("Clouds use different vocabularies; remap labels before aggregating")
    return vocabs[0] if vocabs else None


def aggregate(
    clouds: Sequence[PointCloud],
    poses: Sequence[EgoPose],
    boxes: Sequence[BoundingBox3D],
    target_frame: int,
    window: Optional[int] = None,
    features: Optional[Sequence[np.ndarray]] = None,
    workers: Optional[int] = None,
) -> SceneAggregate:
    """
    Merge frames into target-frame ego coordinates. Static points go
    ego_k -> world -> ego_target. A point inside a moving box (nearest center
    wins on overlap) is re-posed through the same track's target-frame box;
    tracks with no target-frame box only contribute from the target frame.
    Output order: frame index, then point index.
    """
    pose_by_frame: Dict[int, EgoPose] = {}
    for pose in poses:
        if pose.frame_index in pose_by_frame:
            raise ValueError(f"Two ego poses for frame {pose.frame_index}")
        pose_by_frame[pose.frame_index] = pose
    if target_frame not in pose_by_frame:
        raise ValueError(f"Missing ego pose for target frame {target_frame}")
    if features is not None and len(features) != len(clouds):
        raise ValueError(f"{len(features)} feature arrays for {len(clouds)} clouds")
    if features is not None:
        for cloud, f in zip(clouds, features):
            if np.shape(f)[0] != len(cloud):
                raise ValueError(
                    f"Frame {cloud.frame_index}: {np.shape(f)[0]} feature rows for {len(cloud)} points"
                )
    order = sorted(range(len(clouds)), key=lambda i: clouds[i].frame_index)
    frames = [clouds[i].frame_index for i in order]
    if len(set(frames)) != len(frames):
        raise ValueError("Two clouds share a frame index")
    for k in frames:
        if k not in pose_by_frame:
            raise ValueError(f"Missing ego pose for frame {k}")
    if window is not None:
        order = [i for i in order if abs(clouds[i].frame_index - target_frame) <= window]
    vocab = _shared_vocab(clouds)

    ego_t_from_world = invert(pose_by_frame[target_frame].world_from_ego)
    moving = [b for b in boxes if b.is_moving]
    target_boxes = {b.track_id: b for b in moving if b.frame_index == target_frame}

    def one_frame(i: int):
        cloud = clouds[i]
        k = cloud.frame_index
        pts = cloud.points
        n = pts.shape[0]
        labels = cloud.labels if cloud.labels is not None else np.full(n, UNLABELED, dtype=LABEL_DTYPE)
        out = apply(compose(ego_t_from_world, pose_by_frame[k].world_from_ego), pts)
        keep = np.ones(n, dtype=bool)
        frame_boxes = [b for b in moving if b.frame_index == k]
        if frame_boxes and n:
            owner = np.full(n, -1)
            best = np.full(n, np.inf)
            for j, b in enumerate(frame_boxes):
                d = np.linalg.norm(pts - np.asarray(b.center), axis=1)
                better = points_in_box(b, pts) & (d < best)
                owner[better] = j
                best[better] = d[better]
            for j, b in enumerate(frame_boxes):
                sel = owner == j
                if not np.any(sel):
                    continue
                tb = target_boxes.get(b.track_id)
                if tb is not None:
                    out[sel] = apply(compose(box_pose(tb), invert(box_pose(b))), pts[sel])
                elif k != target_frame:
                    keep[sel] = False
        feats = None if features is None else np.asarray(features[i], dtype=np.float64)[keep]
        return out[keep], labels[keep], np.full(int(keep.sum()), k, dtype=np.int64), feats

    def chunk(a: int, b: int):
        return [one_frame(order[j]) for j in range(a, b)]

    parts = [r for chunk_result in map_chunks(chunk, len(order), workers, min_chunk=1) for r in chunk_result]
    if not parts:
        return SceneAggregate(target_frame, np.empty((0, 3)), np.empty(0), np.empty(0), vocab)
    agg_features = None
    if features is not None:
        agg_features = np.concatenate([p[3] for p in parts], axis=0)
    agg = SceneAggregate(
        target_frame,
        np.concatenate([p[0] for p in parts], axis=0),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
        vocab,
        agg_features,
    )
    logger.info("aggregated %d points from %d frames into frame %d", len(agg), len(parts), target_frame)
    return agg


def _bin(agg: SceneAggregate, spec: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """(flat voxel index of in-volume points, their positions in the aggregate)."""
    ijk, inside = spec.voxel_coords(agg.points)
    idx = np.flatnonzero(inside)
    return spec.flat_index(ijk[idx]), idx


def _occupancy_base(spec: GridSpec, flat: np.ndarray) -> np.ndarray:
    grid = np.full(spec.n_voxels, FREE, dtype=LABEL_DTYPE)
    grid[flat] = UNLABELED
    return grid


def _first_per_group(groups: np.ndarray) -> np.ndarray:
    """Mask of the first element of each run in a sorted array."""
    first = np.ones(groups.shape[0], dtype=bool)
    first[1:] = groups[1:] != groups[:-1]
    return first


def vote_histogram(flat: np.ndarray, labels: np.ndarray, workers: Optional[int] = None):
    """
    (voxel, label) vote counts merged over chunks. Returns (voxel, label, count)
    sorted by key; integer counts make the merge exact for any chunking.
    """
    keys = flat.astype(np.int64) * LABEL_SPAN + labels.astype(np.int64)
    parts = map_chunks(lambda a, b: np.unique(keys[a:b], return_counts=True), len(keys), workers)
    all_keys = np.concatenate([p[0] for p in parts])
    all_counts = np.concatenate([p[1] for p in parts]).astype(np.int64)
    uniq, inv = np.unique(all_keys, return_inverse=True)
    counts = np.zeros(uniq.shape[0], dtype=np.int64)
    np.add.at(counts, inv.reshape(-1), all_counts)
    return uniq // LABEL_SPAN, uniq % LABEL_SPAN, counts


def voxelize_majority(agg: SceneAggregate, spec: GridSpec, workers: Optional[int] = None) -> VoxelGrid:
    """Mode of labeled votes per voxel (ties: smallest id); unlabeled points only mark occupancy."""
    flat, idx = _bin(agg, spec)
    grid = _occupancy_base(spec, flat)
    labels = agg.labels[idx]
    voted = ~is_sentinel(labels)
    if np.any(voted):
        vox, lab, counts = vote_histogram(flat[voted], labels[voted], workers)
        order = np.lexsort((lab, -counts, vox))
        first = _first_per_group(vox[order])
        grid[vox[order][first]] = lab[order][first]
    return VoxelGrid(spec, grid, agg.vocab)


def voxelize_nearest(agg: SceneAggregate, spec: GridSpec, workers: Optional[int] = None) -> VoxelGrid:
    """Label of the labeled point nearest the voxel center (ties: earliest point)."""
    flat, idx = _bin(agg, spec)
    grid = _occupancy_base(spec, flat)
    labels = agg.labels[idx]
    voted = ~is_sentinel(labels)
    if np.any(voted):
        f, pid, lab = flat[voted], idx[voted], labels[voted]
        pts = agg.points[pid]

        def d2(a: int, b: int) -> np.ndarray:
            return np.sum((pts[a:b] - spec.centers(f[a:b])) ** 2, axis=1)

        dist = np.concatenate(map_chunks(d2, len(f), workers))
        order = np.lexsort((pid, dist, f))
        first = _first_per_group(f[order])
        grid[f[order][first]] = lab[order][first]
    return VoxelGrid(spec, grid, agg.vocab)


def voxelize(
    agg: SceneAggregate, spec: GridSpec, strategy: Strategy, workers: Optional[int] = None
) -> VoxelGrid:
    strategy = Strategy(strategy)
    if strategy == Strategy.MAJORITY:
        return voxelize_majority(agg, spec, workers)
    if strategy == Strategy.NEAREST:
        return voxelize_nearest(agg, spec, workers)
    raise ValueError("Model-view labeling needs cameras and maps; use voxel_modelview_labels")


def binary_occupancy(grid: VoxelGrid) -> VoxelGrid:
    """FREE stays free; everything else (UNLABELED included) becomes occupied."""
    labels = np.where(grid.occupied, OCCUPIED, FREE).astype(LABEL_DTYPE)
    return VoxelGrid(grid.spec, labels, OCCUPANCY_VOCAB)


def voxel_modelview_labels(
    occupied: VoxelGrid,
    rig: Sequence[CameraModel],
    maps: Sequence[SegmentationMap],
    workers: Optional[int] = None,
) -> VoxelGrid:
    """
    Label occupied voxels by projecting their centers like points; voxels do
    not occlude each other. Invisible occupied voxels get UNLABELED.
    """
    check_rig(rig, maps)
    spec = occupied.spec
    flat = np.flatnonzero(occupied.occupied.ravel())
    centers = spec.centers(flat)
    parts: List[np.ndarray] = map_chunks(
        lambda a, b: label_points(centers[a:b], rig, maps), len(flat), workers
    )
    grid = np.full(spec.n_voxels, FREE, dtype=LABEL_DTYPE)
    if flat.size:
        grid[flat] = np.concatenate(parts)
    return VoxelGrid(spec, grid, maps[0].vocab)


def voxelize_features(agg: SceneAggregate, spec: GridSpec, emb: EmbeddingMatrix) -> VoxelGrid:
    """
    Feature-intermediate baseline: mean lifted feature per voxel, classified
    against `emb`. Voxels whose mean is zero stay UNLABELED.
    """
    if agg.features is None:
        raise ValueError("Aggregate carries no lifted features")
    flat, idx = _bin(agg, spec)
    grid = _occupancy_base(spec, flat)
    if flat.size:
        vox, inv = np.unique(flat, return_inverse=True)
        sums = np.zeros((vox.shape[0], agg.features.shape[1]))
        np.add.at(sums, inv.reshape(-1), agg.features[idx])
        labels, _ = classify_many(sums, emb)
        grid[vox] = labels
    return VoxelGrid(spec, grid, emb.vocab)
