"""
Reconstruction tests: multi-frame aggregation and the voxelization strategies,
checked against brute-force binning oracles.
"""

import sys
from collections import Counter
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

import numpy as np
import pytest

from semocc.geometry import EgoPose, apply, identity, make_camera, pinhole_intrinsics, translation, yaw_transform
from semocc.pixels import SegmentationMap
from semocc.points import PointCloud
from semocc.reconstruction import (
    DEFAULT_GRID,
    FREE,
    OCCUPANCY_VOCAB,
    SceneAggregate,
    Strategy,
    VoxelGrid,
    aggregate,
    binary_occupancy,
    make_box,
    make_grid_spec,
    voxel_modelview_labels,
    voxelize,
    voxelize_features,
    voxelize_majority,
    voxelize_nearest,
)
from semocc.vocab import UNLABELED, EmbeddingMatrix, VocabularySet

VOCAB = VocabularySet(["car", "road", "tree", "pole", "building"])
GRID = make_grid_spec((0.0, 0.0, 0.0), 1.0, (20, 20, 20))


def _random_aggregate(seed: int, n: int = 10_000) -> SceneAggregate:
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1.0, 21.0, size=(n, 3))
    labels = rng.integers(0, len(VOCAB), size=n)
    labels[rng.random(n) < 0.1] = UNLABELED
    return SceneAggregate(0, pts, labels, np.zeros(n), VOCAB)


def _bins(agg: SceneAggregate, spec):
    """Brute-force point binning: {flat voxel: [point indices]}."""
    out = {}
    for i, p in enumerate(agg.points):
        ijk = [int(np.floor((p[a] - spec.origin[a]) / spec.voxel_size)) for a in range(3)]
        if all(0 <= ijk[a] < spec.dims[a] for a in range(3)):
            flat = (ijk[0] * spec.dims[1] + ijk[1]) * spec.dims[2] + ijk[2]
            out.setdefault(flat, []).append(i)
    return out


def _majority_oracle(agg: SceneAggregate, spec) -> np.ndarray:
    grid = np.full(spec.n_voxels, FREE)
    for flat, members in _bins(agg, spec).items():
        votes = Counter(int(agg.labels[i]) for i in members if agg.labels[i] != UNLABELED)
        if votes:
            best = max(votes.values())
            grid[flat] = min(lab for lab, c in votes.items() if c == best)
        else:
            grid[flat] = UNLABELED
    return grid.reshape(spec.dims)


def _nearest_oracle(agg: SceneAggregate, spec) -> np.ndarray:
    grid = np.full(spec.n_voxels, FREE)
    for flat, members in _bins(agg, spec).items():
        labeled = [i for i in members if agg.labels[i] != UNLABELED]
        if not labeled:
            grid[flat] = UNLABELED
            continue
        center = spec.centers([flat])[0]
        d = np.sum((agg.points[labeled] - center) ** 2, axis=1)
        grid[flat] = agg.labels[labeled[int(np.argmin(d))]]
    return grid.reshape(spec.dims)


# ---------------------------------------------------------------- grid spec


def test_default_grid():
    assert DEFAULT_GRID.origin == (-40.0, -40.0, -1.0)
    assert DEFAULT_GRID.voxel_size == pytest.approx(0.4)
    assert DEFAULT_GRID.dims == (200, 200, 16)
    assert DEFAULT_GRID.n_voxels == 640_000


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        make_grid_spec((0, 0, 0), 0.0, (1, 1, 1))
    with pytest.raises(ValueError):
        make_grid_spec((0, 0, 0), 1.0, (1, 0, 1))


def test_box_size_must_be_positive():
    with pytest.raises(ValueError):
        make_box("a", 0, (0, 0, 0), (1, 0, 1), 0.0, True)


# ---------------------------------------------------------------- aggregate


def test_single_frame_identity():
    pts = np.random.default_rng(0).uniform(-5, 5, size=(50, 3))
    cloud = PointCloud(3, pts, np.arange(50) % 5, VOCAB)
    agg = aggregate([cloud], [EgoPose(identity(), 3)], [], 3)
    assert np.allclose(agg.points, pts, atol=1e-12)
    assert np.array_equal(agg.labels, cloud.labels)
    assert set(agg.source_frames.tolist()) == {3}


def test_two_frames_pure_translation():
    clouds = [PointCloud(0, [[1.0, 0.0, 0.0]], [0], VOCAB), PointCloud(1, [[1.0, 0.0, 0.0]], [1], VOCAB)]
    poses = [EgoPose(identity(), 0), EgoPose(translation(5.0, 0.0, 0.0), 1)]
    agg = aggregate(clouds, poses, [], 0)
    assert np.allclose(agg.points, [[1.0, 0.0, 0.0], [6.0, 0.0, 0.0]], atol=1e-12)
    assert agg.source_frames.tolist() == [0, 1]


def test_output_ordered_by_frame_index():
    clouds = [PointCloud(2, [[0.0, 0.0, 2.0]], [2], VOCAB), PointCloud(1, [[0.0, 0.0, 1.0]], [1], VOCAB)]
    poses = [EgoPose(identity(), 1), EgoPose(identity(), 2)]
    agg = aggregate(clouds, poses, [], 2)
    assert agg.source_frames.tolist() == [1, 2]
    assert agg.labels.tolist() == [1, 2]


def test_missing_pose_is_an_error():
    clouds = [PointCloud(0, [[0.0, 0.0, 0.0]]), PointCloud(1, [[0.0, 0.0, 0.0]])]
    with pytest.raises(ValueError):
        aggregate(clouds, [EgoPose(identity(), 0)], [], 0)
    with pytest.raises(ValueError):
        aggregate(clouds[:1], [EgoPose(identity(), 0)], [], 5)


def _moving_cube_frames(n_frames: int = 5):
    local = np.random.default_rng(1).uniform(-0.9, 0.9, size=(200, 3))
    clouds, poses, boxes = [], [], []
    for k in range(n_frames):
        ego_x = 0.5 * k
        center = (float(k) - ego_x, 1.0, 0.0)  # box moves 1 m/frame in the world
        yaw = 0.1 * k
        static = [[10.0 - ego_x, -3.0, 0.0]]
        cube = apply(yaw_transform(yaw, center), local)
        clouds.append(PointCloud(k, np.vstack([cube, static]), np.zeros(201), VOCAB))
        poses.append(EgoPose(translation(ego_x, 0.0, 0.0), k))
        boxes.append(make_box("cube", k, center, (2.0, 2.0, 2.0), yaw, True))
    return local, clouds, poses, boxes


def test_moving_cube_points_coincide_with_target_frame():
    local, clouds, poses, boxes = _moving_cube_frames()
    target = 2
    agg = aggregate(clouds, poses, boxes, target)
    expected_cube = apply(yaw_transform(0.1 * target, (float(target) - 0.5 * target, 1.0, 0.0)), local)
    for k in range(5):
        sel = agg.source_frames == k
        pts = agg.points[sel]
        assert np.max(np.abs(pts[:200] - expected_cube)) < 1e-6
        # the static point lands where it sits in the target frame
        assert np.allclose(pts[200], (10.0 - 0.5 * target, -3.0, 0.0), atol=1e-9)


def test_track_without_target_box_contributes_only_from_target():
    _, clouds, poses, boxes = _moving_cube_frames()
    boxes = [b for b in boxes if b.frame_index != 2]
    agg = aggregate(clouds, poses, boxes, 2)
    counts = Counter(agg.source_frames.tolist())
    assert counts[2] == 201
    assert all(counts[k] == 1 for k in (0, 1, 3, 4))


def test_static_boxes_are_background():
    _, clouds, poses, boxes = _moving_cube_frames()
    boxes = [b._replace(is_moving=False) for b in boxes]
    agg = aggregate(clouds, poses, boxes, 0)
    first = apply(translation(0.5, 0.0, 0.0), clouds[1].points)  # ego_1 -> ego_0
    assert np.allclose(agg.points[agg.source_frames == 1], first, atol=1e-12)


def test_window_limits_frames():
    _, clouds, poses, boxes = _moving_cube_frames()
    agg = aggregate(clouds, poses, boxes, 2, window=1)
    assert sorted(set(agg.source_frames.tolist())) == [1, 2, 3]


def test_aggregate_independent_of_workers():
    _, clouds, poses, boxes = _moving_cube_frames()
    a = aggregate(clouds, poses, boxes, 2, workers=1)
    b = aggregate(clouds, poses, boxes, 2, workers=4)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.labels, b.labels)


# ---------------------------------------------------------------- voxelize


def test_majority_singleton():
    agg = SceneAggregate(0, [[3.5, 4.5, 5.5]], [0], [0], VOCAB)
    grid = voxelize_majority(agg, GRID)
    assert grid.labels[3, 4, 5] == 0
    assert int(np.sum(grid.labels != FREE)) == 1


def test_majority_strict_and_tie():
    pts = [[0.5, 0.5, 0.5]] * 3 + [[1.5, 0.5, 0.5]] * 2
    agg = SceneAggregate(0, pts, [0, 0, 1, 2, 1], [0] * 5, VOCAB)
    grid = voxelize_majority(agg, GRID)
    assert grid.labels[0, 0, 0] == 0
    assert grid.labels[1, 0, 0] == 1  # tie {road, tree} -> smaller id


def test_unlabeled_only_voxel_stays_occupied():
    agg = SceneAggregate(0, [[0.5, 0.5, 0.5], [0.6, 0.5, 0.5]], [UNLABELED, UNLABELED], [0, 0], VOCAB)
    for strategy in (Strategy.MAJORITY, Strategy.NEAREST):
        grid = voxelize(agg, GRID, strategy)
        assert grid.labels[0, 0, 0] == UNLABELED


def test_unlabeled_never_outvotes():
    pts = [[0.5, 0.5, 0.5]] * 4
    agg = SceneAggregate(0, pts, [UNLABELED, UNLABELED, UNLABELED, 3], [0] * 4, VOCAB)
    assert voxelize_majority(agg, GRID).labels[0, 0, 0] == 3


def test_points_outside_the_volume_are_discarded():
    agg = SceneAggregate(0, [[-0.01, 0.5, 0.5], [20.0, 0.5, 0.5], [0.0, 0.0, 0.0]], [0, 1, 2], [0] * 3, VOCAB)
    grid = voxelize_majority(agg, GRID)
    assert int(np.sum(grid.labels != FREE)) == 1
    assert grid.labels[0, 0, 0] == 2


@pytest.mark.parametrize("seed", range(20))
def test_majority_matches_histogram_oracle(seed):
    agg = _random_aggregate(seed)
    assert np.array_equal(voxelize_majority(agg, GRID).labels, _majority_oracle(agg, GRID))


@pytest.mark.parametrize("seed", range(10))
def test_nearest_matches_scan_oracle(seed):
    agg = _random_aggregate(seed + 500)
    assert np.array_equal(voxelize_nearest(agg, GRID).labels, _nearest_oracle(agg, GRID))


def test_nearest_picks_closest_point():
    c = np.array([0.5, 0.5, 0.5])
    agg = SceneAggregate(0, [c + (0.15, 0, 0), c + (0, 0.1, 0)], [0, 1], [0, 0], VOCAB)
    assert voxelize_nearest(agg, GRID).labels[0, 0, 0] == 1


def test_nearest_distance_tie_takes_earliest_point():
    c = np.array([0.5, 0.5, 0.5])
    agg = SceneAggregate(0, [c + (0.25, 0, 0), c - (0.25, 0, 0)], [4, 2], [0, 0], VOCAB)
    assert voxelize_nearest(agg, GRID).labels[0, 0, 0] == 4


def test_single_point_per_voxel_strategies_agree():
    ijk = np.array(np.meshgrid(range(5), range(5), range(5), indexing="ij")).reshape(3, -1).T
    rng = np.random.default_rng(3)
    agg = SceneAggregate(0, ijk + rng.uniform(0.05, 0.95, size=ijk.shape), rng.integers(0, 5, len(ijk)), np.zeros(len(ijk)), VOCAB)
    assert voxelize_majority(agg, GRID) == voxelize_nearest(agg, GRID)


def test_single_label_voxels_strategies_agree():
    rng = np.random.default_rng(4)
    pts = rng.uniform(0, 20, size=(5000, 3))
    labels = (np.floor(pts[:, 0]) % 5).astype(int)  # one label per voxel column
    agg = SceneAggregate(0, pts, labels, np.zeros(5000), VOCAB)
    assert voxelize_majority(agg, GRID) == voxelize_nearest(agg, GRID)


def test_majority_invariant_to_order_and_workers(monkeypatch):
    from semocc import config

    agg = _random_aggregate(77)
    base = voxelize_majority(agg, GRID, workers=1)
    perm = np.random.default_rng(78).permutation(len(agg))
    shuffled = SceneAggregate(0, agg.points[perm], agg.labels[perm], agg.source_frames[perm], VOCAB)
    assert voxelize_majority(shuffled, GRID) == base
    monkeypatch.setattr(config, "CHUNK_SIZE", 100)
    for workers in (2, 8):
        assert voxelize_majority(agg, GRID, workers=workers) == base
        assert voxelize_nearest(agg, GRID, workers=workers) == voxelize_nearest(agg, GRID, workers=1)


def test_occupied_set_matches_binning_oracle():
    agg = _random_aggregate(9, n=3000)
    occupied = set(_bins(agg, GRID))
    for strategy in (Strategy.MAJORITY, Strategy.NEAREST):
        grid = voxelize(agg, GRID, strategy)
        assert set(np.flatnonzero(grid.labels.ravel() != FREE).tolist()) == occupied


def test_voxelize_rejects_modelview():
    with pytest.raises(ValueError):
        voxelize(_random_aggregate(0, n=10), GRID, Strategy.MODELVIEW)


# ---------------------------------------------------------------- occupancy / model-view


def test_binary_occupancy():
    assert not np.any(binary_occupancy(VoxelGrid(GRID, np.full(GRID.n_voxels, FREE))).occupied)
    one = voxelize_majority(SceneAggregate(0, [[1.5, 1.5, 1.5]], [0], [0], VOCAB), GRID)
    assert int(np.sum(binary_occupancy(one).occupied)) == 1


def test_binary_occupancy_elementwise():
    rng = np.random.default_rng(5)
    raw = rng.choice([0, 1, 2, FREE, UNLABELED], size=GRID.n_voxels)
    out = binary_occupancy(VoxelGrid(GRID, raw, VOCAB))
    assert out.vocab == OCCUPANCY_VOCAB and out.is_binary
    assert np.array_equal(out.occupied.ravel(), raw != FREE)


def test_modelview_labels_visible_voxel():
    spec = make_grid_spec((0.0, 0.0, 0.0), 1.0, (1, 1, 4))
    occ = np.full(4, FREE)
    occ[[1, 3]] = 0
    grid = VoxelGrid(spec, occ, OCCUPANCY_VOCAB)
    # camera at (0.5, 0.5, -1) looking +z: both centers lie on the optical axis
    cam = make_camera(pinhole_intrinsics(10, 10, 2, 2), translation(-0.5, -0.5, 1.0), 4, 4)
    m = np.full((4, 4), 1)
    m[2, 2] = 2
    out = voxel_modelview_labels(grid, [cam], [SegmentationMap(m, VOCAB)])
    # voxels along one ray share the front pixel's label
    assert out.labels.ravel().tolist() == [FREE, 2, FREE, 2]
    assert out.vocab == VOCAB


def test_modelview_invisible_voxel_unlabeled():
    spec = make_grid_spec((0.0, 0.0, -5.0), 1.0, (1, 1, 1))
    grid = VoxelGrid(spec, [0], OCCUPANCY_VOCAB)
    cam = make_camera(pinhole_intrinsics(10, 10, 2, 2), identity(), 4, 4)
    out = voxel_modelview_labels(grid, [cam], [SegmentationMap(np.zeros((4, 4)), VOCAB)])
    assert out.labels.ravel().tolist() == [UNLABELED]


def test_modelview_rig_mismatch():
    with pytest.raises(ValueError):
        voxel_modelview_labels(VoxelGrid(GRID, np.full(GRID.n_voxels, FREE)), [], [])


# ---------------------------------------------------------------- lifted features

FEATURE_EMB = EmbeddingMatrix(np.eye(2), VocabularySet(["car", "road"]))


def test_voxelize_features_classifies_summed_features():
    pts = [[0.5, 0.5, 0.5]] * 3 + [[1.5, 0.5, 0.5]] * 2 + [[2.5, 0.5, 0.5]] * 2
    feats = np.array([
        [1.0, 0.0], [0.2, 0.9], [0.3, 0.0],  # sum (1.5, 0.9) -> car
        [0.0, 1.0], [0.4, 0.0],              # sum (0.4, 1.0) -> road
        [1.0, 0.0], [-1.0, 0.0],             # sums to zero
    ])
    agg = SceneAggregate(0, pts, [0] * 7, [0] * 7, None, feats)
    grid = voxelize_features(agg, GRID, FEATURE_EMB)
    assert grid.labels[0, 0, 0] == 0
    assert grid.labels[1, 0, 0] == 1
    assert grid.labels[2, 0, 0] == UNLABELED
    assert int(np.sum(grid.occupied)) == 3
    assert grid.vocab == FEATURE_EMB.vocab


def test_voxelize_features_needs_features():
    with pytest.raises(ValueError, match="no lifted features"):
        voxelize_features(SceneAggregate(0, [[0.5, 0.5, 0.5]], [0], [0]), GRID, FEATURE_EMB)


def test_aggregate_carries_features_in_frame_order():
    clouds = [PointCloud(2, [[0.0, 0.0, 2.0]]), PointCloud(1, [[0.0, 0.0, 1.0], [0.0, 0.0, 1.5]])]
    poses = [EgoPose(identity(), 1), EgoPose(identity(), 2)]
    feats = [np.array([[2.0, 0.0]]), np.array([[1.0, 0.0], [1.5, 0.0]])]
    agg = aggregate(clouds, poses, [], 2, features=feats)
    assert agg.features.tolist() == [[1.0, 0.0], [1.5, 0.0], [2.0, 0.0]]
    assert agg.source_frames.tolist() == [1, 1, 2]


def test_aggregate_feature_length_mismatch():
    clouds = [PointCloud(0, [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), PointCloud(1, [[0.0, 0.0, 1.0]])]
    poses = [EgoPose(identity(), 0), EgoPose(identity(), 1)]
    with pytest.raises(ValueError, match="feature arrays for 2 clouds"):
        aggregate(clouds, poses, [], 0, features=[np.zeros((2, 2))])
    with pytest.raises(ValueError, match="1 feature rows for 2 points"):
        aggregate(clouds, poses, [], 0, features=[np.zeros((1, 2)), np.zeros((1, 2))])
