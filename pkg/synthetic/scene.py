"""
Synthetic oracle scenes with known voxel labels.

- World frame = ego frame of frame 0. Ego pose of frame k: yaw k * yaw_rate,
  position k * ego_velocity. Primitives move by `velocity` per frame.
- Primitives are oriented boxes; the ground is a wide slab whose top sits at
  `height`.
- Cameras and LiDAR share one sensor origin (0, 0, lidar height) in the ego
  frame, so a LiDAR return is never hidden from the camera that sees its ray.
- Ground-truth voxels: occupied when a primitive overlaps the cell with
  positive volume; label of the largest overlap (ties: lowest primitive index).
- Segmentation maps come from per-pixel features (label embedding + noise)
  classified against the frame or sequence vocabulary, then label flips with
  probability `label_noise` to a uniformly chosen wrong label (OV-Seg errors).
"""

import logging
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from semocc.geometry import (
    CameraModel,
    EgoPose,
    RigidTransform,
    apply,
    compose,
    invert,
    look_rotation,
    make_camera,
    make_transform,
    pinhole_intrinsics,
    pixel_rays,
    yaw_transform,
)
from semocc.parallel import map_chunks
from semocc.pixels import FeatureMap, SegmentationMap
from semocc.pipeline import SensorSequence, segment_sequence
from semocc.points import PointCloud
from semocc.reconstruction import BoundingBox3D, GridSpec, VoxelGrid, make_box, make_grid_spec
from semocc.seeding import (
    LABEL_EMBED,
    LABEL_FEATURE,
    LABEL_FLIP,
    LABEL_LAYOUT,
    LABEL_LIDAR,
    LABEL_VOCAB,
    derive_rng,
)
from semocc.vocab import (
    FREE,
    LABEL_DTYPE,
    UNLABELED,
    EmbeddingMatrix,
    VocabScope,
    VocabularySet,
)

logger = logging.getLogger(__name__)

GROUND_EXTENT = 2000.0
HIT_EPS = 1e-9
MIN_OVERLAP = 1e-9  # cubic meters
SUBSAMPLES = 4      # per axis, for rotated boxes


class Shape(str, Enum):
    BOX = "box"
    GROUND = "ground"


class Primitive(NamedTuple):
    shape: Shape
    label: str
    center: Tuple[float, float, float]  # world frame at frame 0
    size: Tuple[float, float, float]
    yaw: float = 0.0
    velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0)  # meters per frame
    track_id: str = ""

    @property
    def is_moving(self) -> bool:
        return any(v != 0 for v in self.velocity)


def box(label: str, center, size, yaw: float = 0.0, velocity=(0.0, 0.0, 0.0), track_id: str = "") -> Primitive:
    return Primitive(
        Shape.BOX,
        label,
        tuple(float(x) for x in center),
        tuple(float(x) for x in size),
        float(yaw),
        tuple(float(x) for x in velocity),
        track_id,
    )


def ground(label: str = "driveable_surface", height: float = 0.0, thickness: float = 1.0) -> Primitive:
    return Primitive(
        Shape.GROUND,
        label,
        (0.0, 0.0, height - thickness / 2.0),
        (GROUND_EXTENT, GROUND_EXTENT, float(thickness)),
    )


class CameraSpec(NamedTuple):
    name: str
    yaw: float = 0.0             # optical-axis heading in the ego frame, radians
    pitch: float = 0.0           # radians, positive looks up
    fov: float = np.radians(100.0)  # horizontal, radians
    width: int = 160
    height: int = 120
    focal: Optional[float] = None  # pixels; overrides fov when given


class LidarSpec(NamedTuple):
    elevation_angles: Tuple[float, ...]  # radians, one ring each
    num_azimuth: int = 720
    max_range: float = 30.0
    noise_std: float = 0.0               # meters, isotropic
    height: float = 1.8                  # sensor origin above the ego origin

    @property
    def rays_per_frame(self) -> int:
        return len(self.elevation_angles) * self.num_azimuth


DEFAULT_ELEVATIONS = tuple(float(np.radians(a)) for a in (-24, -20, -16, -13, -10, -8, -6, -4, -2, 0, 2))


class SceneConfig(NamedTuple):
    seed: int
    grid: GridSpec
    primitives: Tuple[Primitive, ...]
    cameras: Tuple[CameraSpec, ...]
    frames: int
    lidar: LidarSpec
    label_noise: float = 0.0
    ego_velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    ego_yaw_rate: float = 0.0
    target_frame: Optional[int] = None  # default: last frame
    vocab_keep: float = 1.0             # share of visible labels in each frame vocabulary
    vocab_scope: VocabScope = VocabScope.SEQUENCE
    embed_dim: int = 16
    feature_noise: float = 0.0
    box_margin: float = 0.2             # annotation boxes grow by this on every side

    @property
    def target(self) -> int:
        return self.frames - 1 if self.target_frame is None else int(self.target_frame)


class SyntheticScene(NamedTuple):
    config: SceneConfig
    vocab: Optional[VocabularySet]            # dataset labels; None without primitives
    embeddings: Optional[EmbeddingMatrix]
    rig: Tuple[CameraModel, ...]
    poses: List[EgoPose]
    clouds: List[PointCloud]                  # unlabeled
    point_truth: List[np.ndarray]             # dataset label id of each return
    boxes: List[BoundingBox3D]
    gt_grids: List[VoxelGrid]                 # per frame, dataset vocabulary
    true_maps: List[List[SegmentationMap]]    # ideal ray-cast labels, dataset vocabulary
    features: List[List[FeatureMap]]
    frame_vocabs: Optional[List[VocabularySet]]
    seg_maps: Dict[int, List[SegmentationMap]]  # at config.vocab_scope, with label noise


def scene_vocab(primitives: Sequence[Primitive]) -> Optional[VocabularySet]:
    labels = list(dict.fromkeys(p.label.strip().lower() for p in primitives))
    return VocabularySet(labels, scope=VocabScope.DATASET) if labels else None


def ego_pose(cfg: SceneConfig, k: int) -> EgoPose:
    t = k * np.asarray(cfg.ego_velocity, dtype=np.float64)
    return EgoPose(yaw_transform(k * cfg.ego_yaw_rate, t), k)


def primitive_pose(p: Primitive, pose: EgoPose) -> RigidTransform:
    """ego_from_primitive at the pose's frame; the ground slab stays axis-aligned."""
    k = pose.frame_index
    world = yaw_transform(p.yaw, np.asarray(p.center) + k * np.asarray(p.velocity))
    ego = compose(invert(pose.world_from_ego), world)
    if p.shape == Shape.GROUND:
        return make_transform(np.eye(3), ego.translation)
    return ego


def sensor_origin(cfg: SceneConfig) -> np.ndarray:
    return np.array([0.0, 0.0, cfg.lidar.height])


def make_rig(cfg: SceneConfig) -> Tuple[CameraModel, ...]:
    origin = sensor_origin(cfg)
    rig = []
    for spec in cfg.cameras:
        if spec.focal is None:
            if not 0.0 < spec.fov < np.pi:
                raise ValueError(f"Camera {spec.name!r}: field of view must be in (0, pi), got {spec.fov}")
            focal = (spec.width / 2.0) / np.tan(spec.fov / 2.0)
        else:
            focal = float(spec.focal)
        forward = (
            np.cos(spec.pitch) * np.cos(spec.yaw),
            np.cos(spec.pitch) * np.sin(spec.yaw),
            np.sin(spec.pitch),
        )
        r = look_rotation(forward)
        k = pinhole_intrinsics(focal, focal, spec.width / 2.0, spec.height / 2.0)
        rig.append(make_camera(k, make_transform(r, -(r @ origin)), spec.width, spec.height))
    return tuple(rig)


def _aabb(pose: RigidTransform, half: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    extent = np.abs(pose.rotation) @ half
    return pose.translation - extent, pose.translation + extent


def check_config(cfg: SceneConfig) -> None:
    """Raise ValueError when the scene cannot be generated as configured."""
    if cfg.frames < 1:
        raise ValueError(f"Scene needs at least one frame, got {cfg.frames}")
    if not 0 <= cfg.target < cfg.frames:
        raise ValueError(f"Target frame {cfg.target} outside 0..{cfg.frames - 1}")
    if not 0.0 <= cfg.label_noise < 0.5:
        raise ValueError(f"label_noise must be in [0, 0.5), got {cfg.label_noise}")
    if not 0.0 < cfg.vocab_keep <= 1.0:
        raise ValueError(f"vocab_keep must be in (0, 1], got {cfg.vocab_keep}")
    if cfg.embed_dim < 2:
        raise ValueError(f"embed_dim must be >= 2, got {cfg.embed_dim}")
    if cfg.feature_noise < 0 or cfg.box_margin < 0:
        raise ValueError("feature_noise and box_margin must be non-negative")
    if VocabScope(cfg.vocab_scope) == VocabScope.DATASET:
        raise ValueError("Scene vocabulary scope must be per-frame or per-sequence")
    if not cfg.cameras:
        raise ValueError("Scene needs at least one camera")
    lidar = cfg.lidar
    if not lidar.elevation_angles or lidar.num_azimuth < 1 or not lidar.max_range > 0 or lidar.noise_std < 0:
        raise ValueError(f"Invalid LiDAR pattern: {lidar}")
    lo_grid = np.asarray(cfg.grid.origin)
    hi_grid = np.asarray(cfg.grid.upper)
    for i, p in enumerate(cfg.primitives):
        if not p.label.strip():
            raise ValueError(f"Primitive {i} has an empty label")
        if min(p.size) <= 0:
            raise ValueError(f"Primitive {i} ({p.label}) has a non-positive size {p.size}")
        if p.shape == Shape.GROUND:
            if p.is_moving:
                raise ValueError(f"Ground primitive {i} cannot move")
            continue
        half = np.asarray(p.size) / 2.0
        for k in range(cfg.frames):
            lo, hi = _aabb(primitive_pose(p, ego_pose(cfg, k)), half)
            if np.any(lo < lo_grid - 1e-9) or np.any(hi > hi_grid + 1e-9):
                raise ValueError(f"Primitive {i} ({p.label}) leaves the grid volume at frame {k}")


def cast_rays(origin, dirs, poses: Sequence[RigidTransform], halves: Sequence[np.ndarray]):
    """
    Nearest hit of each ray among oriented boxes (slab test in box-local
    coordinates). Returns (distance (M,), box index (M,)); misses get inf / -1.
    Ties go to the lowest box index.
    """
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    if not poses:
        return np.full(dirs.shape[0], np.inf), np.full(dirs.shape[0], -1)
    ts = np.empty((len(poses), dirs.shape[0]))
    for j, (pose, half) in enumerate(zip(poses, halves)):
        inv = invert(pose)
        o = apply(inv, origin)
        d = dirs @ inv.rotation.T
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-half - o) / d
            t2 = (half - o) / d
        parallel = d == 0
        inside = np.abs(o) <= half
        lo = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
        hi = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
        near = lo.max(axis=1)
        far = hi.min(axis=1)
        ts[j] = np.where((near <= far) & (near > HIT_EPS), near, np.inf)
    idx = np.argmin(ts, axis=0)
    t = ts[idx, np.arange(dirs.shape[0])]
    return t, np.where(np.isfinite(t), idx, -1)


def lidar_directions(lidar: LidarSpec) -> np.ndarray:
    """Ring-major unit directions; azimuth i of n is 2 pi i / n."""
    el = np.repeat(np.asarray(lidar.elevation_angles, dtype=np.float64), lidar.num_azimuth)
    az = np.tile(2.0 * np.pi * np.arange(lidar.num_azimuth) / lidar.num_azimuth, len(lidar.elevation_angles))
    return np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=1)


def _axis_overlap(lo: float, hi: float, origin: float, size: float, n: int):
    """Voxel index range along one axis and the overlap length of each cell."""
    i0 = max(0, int(np.floor((lo - origin) / size)))
    i1 = min(n, int(np.ceil((hi - origin) / size)))
    if i1 <= i0:
        return np.arange(0), np.zeros(0)
    cells = np.arange(i0, i1)
    start = origin + cells * size
    return cells, np.clip(np.minimum(hi, start + size) - np.maximum(lo, start), 0.0, None)


def overlap_volumes(pose: RigidTransform, half: np.ndarray, spec: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """(flat voxel indices, overlap volume) of one oriented box with the grid."""
    lo, hi = _aabb(pose, half)
    axes = [_axis_overlap(lo[a], hi[a], spec.origin[a], spec.voxel_size, spec.dims[a]) for a in range(3)]
    if any(c.size == 0 for c, _ in axes):
        return np.empty(0, dtype=np.int64), np.empty(0)
    ii, jj, kk = np.meshgrid(axes[0][0], axes[1][0], axes[2][0], indexing="ij")
    flat = spec.flat_index(np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1))
    r = np.abs(pose.rotation)
    if np.all((r < 1e-12) | (np.abs(r - 1.0) < 1e-12)):
        vol = np.einsum("i,j,k->ijk", axes[0][1], axes[1][1], axes[2][1]).ravel()
    else:
        # sub-voxel sampling for rotated boxes
        q = (np.arange(SUBSAMPLES) + 0.5) / SUBSAMPLES
        offs = np.stack(np.meshgrid(q, q, q, indexing="ij"), axis=-1).reshape(-1, 3) * spec.voxel_size
        corners = np.asarray(spec.origin) + spec.unravel(flat) * spec.voxel_size
        samples = (corners[:, None, :] + offs[None, :, :]).reshape(-1, 3)
        local = apply(invert(pose), samples)
        inside = np.all(np.abs(local) <= half, axis=1).reshape(flat.shape[0], -1)
        vol = inside.mean(axis=1) * spec.voxel_size ** 3
    keep = vol > MIN_OVERLAP
    return flat[keep], vol[keep]


def ground_truth(
    poses: Sequence[RigidTransform], halves: Sequence[np.ndarray], label_ids: Sequence[int], spec: GridSpec
) -> np.ndarray:
    best = np.zeros(spec.n_voxels)
    labels = np.full(spec.n_voxels, FREE, dtype=LABEL_DTYPE)
    for pose, half, lab in zip(poses, halves, label_ids):
        flat, vol = overlap_volumes(pose, half, spec)
        better = vol > best[flat]
        best[flat[better]] = vol[better]
        labels[flat[better]] = lab
    return labels


class _Frame(NamedTuple):
    points: np.ndarray
    truth: np.ndarray
    true_maps: List[np.ndarray]
    features: List[np.ndarray]
    gt: np.ndarray
    boxes: List[BoundingBox3D]


def _render_frame(cfg: SceneConfig, k: int, rig, label_ids: np.ndarray, emb_rows: Optional[np.ndarray]) -> _Frame:
    pose = ego_pose(cfg, k)
    prim_poses = [primitive_pose(p, pose) for p in cfg.primitives]
    halves = [np.asarray(p.size) / 2.0 for p in cfg.primitives]
    origin = sensor_origin(cfg)

    true_maps, features = [], []
    for c, cam in enumerate(rig):
        dirs, cam_origin = pixel_rays(cam)
        _, idx = cast_rays(cam_origin, dirs, prim_poses, halves)
        lab = np.where(idx >= 0, label_ids[np.maximum(idx, 0)] if len(label_ids) else 0, UNLABELED)
        lab = lab.astype(LABEL_DTYPE).reshape(cam.height, cam.width)
        true_maps.append(lab)
        feat = np.zeros((cam.height, cam.width, cfg.embed_dim))
        if emb_rows is not None:
            rng = derive_rng(cfg.seed, LABEL_FEATURE, k, c)
            noise = rng.standard_normal(feat.shape) * cfg.feature_noise
            seen = lab != UNLABELED
            feat[seen] = emb_rows[lab[seen].astype(np.int64)] + noise[seen]
        features.append(feat)

    dirs = lidar_directions(cfg.lidar)
    t, idx = cast_rays(origin, dirs, prim_poses, halves)
    hit = np.isfinite(t) & (t <= cfg.lidar.max_range)
    points = origin + t[hit, None] * dirs[hit]
    if cfg.lidar.noise_std > 0:
        rng = derive_rng(cfg.seed, LABEL_LIDAR, k)
        points = points + rng.standard_normal((dirs.shape[0], 3))[hit] * cfg.lidar.noise_std
    truth = label_ids[idx[hit]].astype(LABEL_DTYPE) if hit.any() else np.empty(0, dtype=LABEL_DTYPE)

    gt = ground_truth(prim_poses, halves, label_ids, cfg.grid)
    grow = 2.0 * cfg.box_margin
    boxes = []
    for i, (p, pp) in enumerate(zip(cfg.primitives, prim_poses)):
        if p.shape != Shape.BOX:
            continue
        yaw = float(np.arctan2(pp.rotation[1, 0], pp.rotation[0, 0]))
        size = tuple(s + grow for s in p.size)
        boxes.append(make_box(p.track_id or f"{p.label}-{i}", k, pp.translation, size, yaw, p.is_moving))
    return _Frame(points, truth, true_maps, features, gt, boxes)


def frame_vocabularies(cfg: SceneConfig, vocab: VocabularySet, true_maps: Sequence[Sequence[np.ndarray]]):
    """
    Per-frame vocabularies: labels visible in the frame's renders (all scene
    labels when none is visible), subsampled to `vocab_keep`, in dataset order.
    """
    out = []
    for k, maps in enumerate(true_maps):
        seen = np.unique(np.concatenate([m.ravel() for m in maps]))
        pool = [int(i) for i in seen if i != UNLABELED] or list(range(len(vocab)))
        n_keep = max(1, int(np.ceil(cfg.vocab_keep * len(pool) - 1e-9)))
        if n_keep < len(pool):
            pick = derive_rng(cfg.seed, LABEL_VOCAB, k).choice(len(pool), size=n_keep, replace=False)
            pool = [pool[i] for i in sorted(pick)]
        out.append(VocabularySet([vocab[i] for i in pool], scope=VocabScope.FRAME))
    return out


def flip_labels(seg: SegmentationMap, p: float, seed: int, frame: int, cam: int) -> SegmentationMap:
    """
    Replace each labeled pixel, with probability p, by a uniformly chosen
    different label of the map's vocabulary. Draws depend only on
    (seed, frame, cam) and the image size.
    """
    rng = derive_rng(seed, LABEL_FLIP, frame, cam)
    u = rng.random(seg.data.shape)
    r = rng.random(seg.data.shape)
    n = len(seg.vocab) if seg.vocab is not None else 0
    if p <= 0 or n < 2:
        return seg
    lab = seg.data.astype(np.int64)
    flip = (u < p) & (seg.data != UNLABELED)
    shifted = (lab + 1 + np.floor(r * (n - 1)).astype(np.int64)) % n
    return SegmentationMap(np.where(flip, shifted, lab), seg.vocab)


def segment_scene(scene: SyntheticScene, scope: Optional[VocabScope] = None) -> Dict[int, List[SegmentationMap]]:
    """Seg maps of every frame at `scope` (default: the config's), label noise applied."""
    cfg = scene.config
    if scene.vocab is None:
        return {k: list(maps) for k, maps in enumerate(scene.true_maps)}
    scope = VocabScope(cfg.vocab_scope if scope is None else scope)
    feats = {k: scene.features[k] for k in range(cfg.frames)}
    vocabs = {k: scene.frame_vocabs[k] for k in range(cfg.frames)}
    maps = segment_sequence(feats, vocabs, scene.embeddings, scope)
    return {
        k: [flip_labels(m, cfg.label_noise, cfg.seed, k, c) for c, m in enumerate(maps[k])]
        for k in range(cfg.frames)
    }


def generate(cfg: SceneConfig, workers: Optional[int] = None) -> SyntheticScene:
    """Render every frame; bitwise reproducible for a fixed config."""
    check_config(cfg)
    rig = make_rig(cfg)
    vocab = scene_vocab(cfg.primitives)
    label_ids = np.array(
        [vocab.index_of(p.label) for p in cfg.primitives] if vocab is not None else [], dtype=np.int64
    )
    emb = None
    if vocab is not None:
        rows = derive_rng(cfg.seed, LABEL_EMBED).standard_normal((len(vocab), cfg.embed_dim))
        emb = EmbeddingMatrix(rows / np.linalg.norm(rows, axis=1, keepdims=True), vocab)

    def chunk(a: int, b: int) -> List[_Frame]:
        return [_render_frame(cfg, k, rig, label_ids, None if emb is None else emb.rows) for k in range(a, b)]

    frames = [f for part in map_chunks(chunk, cfg.frames, workers, min_chunk=1) for f in part]
    poses = [ego_pose(cfg, k) for k in range(cfg.frames)]
    clouds = [PointCloud(k, f.points) for k, f in enumerate(frames)]
    true_maps = [[SegmentationMap(m, vocab) for m in f.true_maps] for f in frames]
    features = [[FeatureMap(x) for x in f.features] for f in frames]
    gt_grids = [VoxelGrid(cfg.grid, f.gt, vocab) for f in frames]
    boxes = [b for f in frames for b in f.boxes]
    frame_vocabs = frame_vocabularies(cfg, vocab, [f.true_maps for f in frames]) if vocab is not None else None

    scene = SyntheticScene(
        cfg, vocab, emb, rig, poses, clouds, [f.truth for f in frames], boxes,
        gt_grids, true_maps, features, frame_vocabs, {},
    )
    scene = scene._replace(seg_maps=segment_scene(scene))
    logger.info(
        "generated %d frames: %d returns, %d occupied gt voxels in frame %d",
        cfg.frames, sum(len(c) for c in clouds), int(gt_grids[cfg.target].occupied.sum()), cfg.target,
    )
    return scene


def sensor_sequence(scene: SyntheticScene) -> SensorSequence:
    return SensorSequence(scene.rig, scene.poses, scene.clouds, scene.boxes)


# Layout for random scenes (all lengths multiples of the 0.4 m voxel edge)
DEMO_GRID = make_grid_spec((-12.0, -12.0, -1.0), 0.4, (60, 60, 16))
OBJECT_SIZES = {
    "car": (4.0, 1.6, 1.6),
    "truck": (6.0, 2.4, 2.8),
    "bus": (8.0, 2.4, 3.2),
    "pedestrian": (0.8, 0.8, 1.6),
    "traffic_cone": (0.4, 0.4, 0.8),
    "barrier": (0.4, 2.0, 0.8),
    "manmade": (2.0, 2.0, 4.0),
    "vegetation": (1.2, 1.2, 2.4),
}
BOX_BOTTOM = 0.3          # keeps a gap above the ground top at 0.0
CELL_OFFSET = 0.1         # box faces sit a quarter voxel past cell boundaries
CLEARANCE = 0.8
EGO_STEP = 1.6            # meters per frame along +x
MOVER_STEP = 0.8


def _overlaps(lo, hi, placed) -> bool:
    return any(np.all(lo < h + CLEARANCE) and np.all(hi > l - CLEARANCE) for l, h in placed)


def random_scene_config(
    seed: int,
    frames: int = 5,
    label_noise: float = 0.0,
    vocab_keep: float = 1.0,
    feature_noise: float = 0.05,
    lidar_noise: float = 0.0,
    vocab_scope: VocabScope = VocabScope.SEQUENCE,
    cameras: Optional[Sequence[CameraSpec]] = None,
) -> SceneConfig:
    """
    Street scene: ground, one car driving along the right lane, and 5-8 static
    objects beside the road; the ego drives forward EGO_STEP per frame.
    """
    rng = derive_rng(seed, LABEL_LAYOUT)
    spec = DEMO_GRID
    cell = spec.voxel_size
    lo_grid = np.asarray(spec.origin[:2]) + cell
    hi_grid = np.asarray(spec.upper[:2]) - cell
    travel = EGO_STEP * (frames - 1)

    prims = [ground("driveable_surface", 0.0, 1.0)]
    placed = []

    # the mover keeps -x of the ego over time: relative speed MOVER_STEP - EGO_STEP
    size = np.asarray(OBJECT_SIZES["car"])
    rel = (EGO_STEP - MOVER_STEP) * (frames - 1)
    x_cells = np.arange(int(np.ceil((lo_grid[0] + rel - CELL_OFFSET) / cell)),
                        int(np.floor((hi_grid[0] - size[0] - CELL_OFFSET) / cell)) + 1)
    x0 = x_cells[rng.integers(len(x_cells))] * cell + CELL_OFFSET
    y0 = -10 * cell + CELL_OFFSET
    lo = np.array([x0, y0])
    prims.append(box("car", (x0 + size[0] / 2, y0 + size[1] / 2, BOX_BOTTOM + size[2] / 2), size,
                     velocity=(MOVER_STEP, 0.0, 0.0), track_id="car-moving"))
    placed.append((lo, lo + size[:2] + np.array([MOVER_STEP * (frames - 1), 0.0])))

    labels = sorted(OBJECT_SIZES)
    n_static = int(rng.integers(5, 9))
    for _ in range(n_static):
        for _attempt in range(50):
            label = labels[rng.integers(len(labels))]
            size = np.asarray(OBJECT_SIZES[label])
            x_lo, x_hi = lo_grid[0] + travel, hi_grid[0] - size[0]
            y_lo, y_hi = lo_grid[1], hi_grid[1] - size[1]
            x_first = int(np.ceil((x_lo - CELL_OFFSET) / cell))
            x_last = int(np.floor((x_hi - CELL_OFFSET) / cell))
            y_first = int(np.ceil((y_lo - CELL_OFFSET) / cell))
            y_last = int(np.floor((y_hi - CELL_OFFSET) / cell))
            if x_last < x_first or y_last < y_first:
                continue
            xi = rng.integers(x_first, x_last + 1)
            yi = rng.integers(y_first, y_last + 1)
            lo = np.array([xi * cell + CELL_OFFSET, yi * cell + CELL_OFFSET])
            hi = lo + size[:2]
            if lo[1] < 1.5 and hi[1] > -1.5:  # ego corridor
                continue
            if _overlaps(lo, hi, placed):
                continue
            placed.append((lo, hi))
            center = (lo[0] + size[0] / 2, lo[1] + size[1] / 2, BOX_BOTTOM + size[2] / 2)
            prims.append(box(label, center, size))
            break

    if cameras is None:
        cameras = (CameraSpec("front", 0.0), CameraSpec("back", np.pi))
    return SceneConfig(
        seed=seed,
        grid=spec,
        primitives=tuple(prims),
        cameras=tuple(cameras),
        frames=frames,
        lidar=LidarSpec(DEFAULT_ELEVATIONS, 720, 30.0, lidar_noise, 1.8),
        label_noise=label_noise,
        ego_velocity=(EGO_STEP, 0.0, 0.0),
        vocab_keep=vocab_keep,
        vocab_scope=VocabScope(vocab_scope),
        feature_noise=feature_noise,
    )
