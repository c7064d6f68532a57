"""
JSON configuration files: synthetic scene configs, per-sequence descriptions
(poses, cameras, boxes and the paths of the binary artifacts) and label
override maps. Paths inside a sequence file are relative to that file.
Matrices are row-major nested lists, angles are radians.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, NamedTuple, Optional, Tuple, Union

import numpy as np

from semocc.geometry import CameraModel, EgoPose, RigidTransform, from_matrix, make_camera, to_matrix
from semocc.pipeline import SensorSequence, segment_sequence
from semocc.pixels import FeatureMap, SegmentationMap
from semocc.reconstruction import BoundingBox3D, GridSpec, Strategy, VoxelGrid, make_box, make_grid_spec
from semocc.vocab import EmbeddingMatrix, VocabScope, VocabularySet
from synthetic.scene import (
    CameraSpec,
    LidarSpec,
    Primitive,
    SceneConfig,
    Shape,
    SyntheticScene,
    random_scene_config,
    segment_scene,
)

from . import formats

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SEQUENCE_FORMAT = "semocc-sequence"
SEQUENCE_VERSION = 1
LAYOUT_RANDOM = "random"
LAYOUT_EXPLICIT = "explicit"
# fixed by the random street layout
RANDOM_LAYOUT_KEYS = ("grid", "ego", "primitives")


class ConfigError(ValueError):
    """Missing or invalid config field, or a referenced file that does not exist."""


def _load_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: file not found")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def _save_json(path: PathLike, data: Dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
        f.write("\n")


def _get(d: Mapping[str, Any], key: str, where: str, default: Any = ...) -> Any:
    if key in d:
        return d[key]
    if default is ...:
        raise ConfigError(f"{where}: missing field {key!r}")
    return default


def _floats(value: Any, n: int, where: str) -> Tuple[float, ...]:
    try:
        out = tuple(float(x) for x in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected {n} numbers, got {value!r}")
    if len(out) != n:
        raise ConfigError(f"{where}: expected {n} numbers, got {len(out)}")
    return out


def _matrix(value: Any, rows: int, cols: int, where: str) -> np.ndarray:
    try:
        m = np.array(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a {rows}x{cols} matrix")
    if m.shape != (rows, cols):
        raise ConfigError(f"{where}: expected a {rows}x{cols} matrix, got shape {m.shape}")
    return m


def _transform(value: Any, where: str) -> RigidTransform:
    try:
        return from_matrix(_matrix(value, 4, 4, where))
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from e


def _matrix_list(m: np.ndarray) -> List[List[float]]:
    return [[float(x) for x in row] for row in np.asarray(m)]


def grid_from_dict(d: Mapping[str, Any], where: str = "grid") -> GridSpec:
    try:
        return make_grid_spec(
            _floats(_get(d, "origin", where), 3, f"{where}.origin"),
            float(_get(d, "voxel_size", where)),
            [int(x) for x in _get(d, "dims", where)],
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{where}: {e}") from e


def grid_to_dict(spec: GridSpec) -> Dict[str, Any]:
    return {
        "origin": [float(x) for x in spec.origin],
        "voxel_size": float(spec.voxel_size),
        "dims": [int(x) for x in spec.dims],
    }


# -- synthetic scene configs --------------------------------------------------

def _camera_spec(d: Mapping[str, Any], where: str) -> CameraSpec:
    default = CameraSpec("")
    focal = d.get("focal")
    return CameraSpec(
        name=str(_get(d, "name", where)),
        yaw=float(d.get("yaw", default.yaw)),
        pitch=float(d.get("pitch", default.pitch)),
        fov=float(d.get("fov", default.fov)),
        width=int(d.get("width", default.width)),
        height=int(d.get("height", default.height)),
        focal=None if focal is None else float(focal),
    )


def _lidar_spec(d: Mapping[str, Any], where: str) -> LidarSpec:
    return LidarSpec(
        elevation_angles=tuple(float(x) for x in _get(d, "elevations", where)),
        num_azimuth=int(d.get("azimuth_steps", 720)),
        max_range=float(d.get("max_range", 30.0)),
        noise_std=float(d.get("noise_std", 0.0)),
        height=float(d.get("height", 1.8)),
    )


def _primitive(d: Mapping[str, Any], where: str) -> Primitive:
    try:
        shape = Shape(_get(d, "shape", where))
    except ValueError:
        raise ConfigError(f"{where}.shape: expected one of {[s.value for s in Shape]}, got {d.get('shape')!r}")
    return Primitive(
        shape,
        str(_get(d, "label", where)),
        _floats(_get(d, "center", where), 3, f"{where}.center"),
        _floats(_get(d, "size", where), 3, f"{where}.size"),
        float(d.get("yaw", 0.0)),
        _floats(d.get("velocity", (0.0, 0.0, 0.0)), 3, f"{where}.velocity"),
        str(d.get("track_id", "")),
    )


def scene_config_from_dict(d: Mapping[str, Any], seed: Optional[int] = None, where: str = "scene") -> SceneConfig:
    """
    Build a SceneConfig. With "layout": "random" the primitives, grid and ego
    motion come from the seeded street layout; `seed` overrides the file's seed.
    """
    seed = int(_get(d, "seed", where, 0) if seed is None else seed)
    frames = int(_get(d, "frames", where))
    layout = d.get("layout", LAYOUT_EXPLICIT)
    noise = d.get("noise", {})
    vocab = d.get("vocab", {})
    try:
        scope = VocabScope(vocab.get("scope", VocabScope.SEQUENCE.value))
    except ValueError:
        raise ConfigError(f"{where}.vocab.scope: expected 'per-frame' or 'per-sequence', got {vocab.get('scope')!r}")
    cameras = tuple(_camera_spec(c, f"{where}.cameras[{i}]") for i, c in enumerate(d.get("cameras", [])))
    try:
        if layout == LAYOUT_RANDOM:
            clash = [k for k in RANDOM_LAYOUT_KEYS if k in d]
            if clash:
                raise ConfigError(f"{where}: the random layout fixes {clash}; remove them or use an explicit layout")
            cfg = random_scene_config(
                seed,
                frames=frames,
                label_noise=float(noise.get("label_flip", 0.0)),
                vocab_keep=float(vocab.get("keep", 1.0)),
                feature_noise=float(noise.get("feature", 0.0)),
                vocab_scope=scope,
                cameras=cameras or None,
            )
        elif layout == LAYOUT_EXPLICIT:
            ego = d.get("ego", {})
            cfg = SceneConfig(
                seed=seed,
                grid=grid_from_dict(_get(d, "grid", where), f"{where}.grid"),
                primitives=tuple(_primitive(p, f"{where}.primitives[{i}]") for i, p in enumerate(d.get("primitives", []))),
                cameras=cameras,
                frames=frames,
                lidar=LidarSpec(()),
                label_noise=float(noise.get("label_flip", 0.0)),
                ego_velocity=_floats(ego.get("velocity", (0.0, 0.0, 0.0)), 3, f"{where}.ego.velocity"),
                ego_yaw_rate=float(ego.get("yaw_rate", 0.0)),
                vocab_keep=float(vocab.get("keep", 1.0)),
                vocab_scope=scope,
                feature_noise=float(noise.get("feature", 0.0)),
            )
        else:
            raise ConfigError(f"{where}.layout: expected 'random' or 'explicit', got {layout!r}")
        if "lidar" in d:
            cfg = cfg._replace(lidar=_lidar_spec(d["lidar"], f"{where}.lidar"))
        elif layout == LAYOUT_EXPLICIT:
            raise ConfigError(f"{where}: missing field 'lidar'")
        target = d.get("target_frame")
        return cfg._replace(
            target_frame=None if target is None else int(target),
            embed_dim=int(vocab.get("embed_dim", cfg.embed_dim)),
            box_margin=float(d.get("box_margin", cfg.box_margin)),
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{where}: {e}") from e


def scene_config_to_dict(cfg: SceneConfig) -> Dict[str, Any]:
    """Explicit-layout dict; scene_config_from_dict of it rebuilds `cfg`."""
    return {
        "seed": int(cfg.seed),
        "layout": LAYOUT_EXPLICIT,
        "frames": int(cfg.frames),
        "target_frame": cfg.target_frame,
        "grid": grid_to_dict(cfg.grid),
        "ego": {"velocity": [float(x) for x in cfg.ego_velocity], "yaw_rate": float(cfg.ego_yaw_rate)},
        "cameras": [
            {
                "name": c.name,
                "yaw": float(c.yaw),
                "pitch": float(c.pitch),
                "fov": float(c.fov),
                "width": int(c.width),
                "height": int(c.height),
                "focal": None if c.focal is None else float(c.focal),
            }
            for c in cfg.cameras
        ],
        "lidar": {
            "elevations": [float(a) for a in cfg.lidar.elevation_angles],
            "azimuth_steps": int(cfg.lidar.num_azimuth),
            "max_range": float(cfg.lidar.max_range),
            "noise_std": float(cfg.lidar.noise_std),
            "height": float(cfg.lidar.height),
        },
        "primitives": [
            {
                "shape": p.shape.value,
                "label": p.label,
                "center": [float(x) for x in p.center],
                "size": [float(x) for x in p.size],
                "yaw": float(p.yaw),
                "velocity": [float(x) for x in p.velocity],
                "track_id": p.track_id,
            }
            for p in cfg.primitives
        ],
        "noise": {"label_flip": float(cfg.label_noise), "feature": float(cfg.feature_noise)},
        "vocab": {
            "keep": float(cfg.vocab_keep),
            "scope": VocabScope(cfg.vocab_scope).value,
            "embed_dim": int(cfg.embed_dim),
        },
        "box_margin": float(cfg.box_margin),
    }


def load_scene_config(path: PathLike, seed: Optional[int] = None) -> SceneConfig:
    return scene_config_from_dict(_load_json(path), seed=seed, where=str(path))


def save_scene_config(path: PathLike, cfg: SceneConfig) -> None:
    _save_json(path, scene_config_to_dict(cfg))


# -- sequences ----------------------------------------------------------------

class FrameFiles(NamedTuple):
    index: int
    cloud: Path
    ego_pose: EgoPose
    maps: Tuple[Path, ...]       # one per camera, rig order
    vocab: Optional[Path]        # frame vocabulary, one label per line


class SequenceConfig(NamedTuple):
    path: Path
    grid: GridSpec
    target_frame: Optional[int]
    window: Optional[int]
    rig: Tuple[CameraModel, ...]
    camera_names: Tuple[str, ...]
    frames: Tuple[FrameFiles, ...]
    boxes: Tuple[BoundingBox3D, ...]
    embeddings: Optional[Path]
    ground_truth: Optional[Path]


class SequenceData(NamedTuple):
    """Every artifact of a sequence, loaded and cross-checked."""
    config: SequenceConfig
    sequence: SensorSequence
    maps: Optional[Dict[int, List[SegmentationMap]]]   # label maps, when shipped
    features: Optional[Dict[int, List[FeatureMap]]]    # feature maps, when shipped
    vocabs: Dict[int, VocabularySet]
    embeddings: Optional[EmbeddingMatrix]

    def segmentation(self, scope: VocabScope = VocabScope.SEQUENCE) -> Dict[int, List[SegmentationMap]]:
        """Label maps; feature maps are classified against the frame or merged vocabulary."""
        if self.maps is not None:
            logger.info(
                "%s ships label maps; vocabulary scope %s does not apply",
                self.config.path, VocabScope(scope).value,
            )
            return self.maps
        return segment_sequence(self.features, self.vocabs, self.embeddings, scope)


class PipelineConfig(NamedTuple):
    sequence: SequenceConfig
    strategy: Strategy
    scope: VocabScope
    output: Path
    report: Optional[Path]
    workers: int


def _file(root: Path, value: Any, where: str) -> Path:
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{where}: expected a file path, got {value!r}")
    p = Path(value)
    p = p if p.is_absolute() else root / p
    if not p.exists():
        raise ConfigError(f"{where}: file not found: {p}")
    return p


def _camera(d: Mapping[str, Any], where: str) -> CameraModel:
    try:
        return make_camera(
            _matrix(_get(d, "intrinsics", where), 3, 3, f"{where}.intrinsics"),
            _transform(_get(d, "cam_from_ego", where), f"{where}.cam_from_ego"),
            int(_get(d, "width", where)),
            int(_get(d, "height", where)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def _box(d: Mapping[str, Any], where: str) -> BoundingBox3D:
    try:
        return make_box(
            _get(d, "track_id", where),
            int(_get(d, "frame", where)),
            _floats(_get(d, "center", where), 3, f"{where}.center"),
            _floats(_get(d, "size", where), 3, f"{where}.size"),
            float(d.get("yaw", 0.0)),
            bool(_get(d, "moving", where)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def load_sequence(path: PathLike) -> SequenceConfig:
    """Parse a sequence file and check that every referenced file exists."""
    path = Path(path)
    d = _load_json(path)
    where = str(path)
    if d.get("format", SEQUENCE_FORMAT) != SEQUENCE_FORMAT:
        raise ConfigError(f"{where}: format is {d.get('format')!r}, expected {SEQUENCE_FORMAT!r}")
    if int(d.get("version", SEQUENCE_VERSION)) != SEQUENCE_VERSION:
        raise ConfigError(f"{where}: unsupported version {d.get('version')!r}")
    root = path.parent
    cams = _get(d, "cameras", where)
    if not cams:
        raise ConfigError(f"{where}.cameras: at least one camera is required")
    rig = tuple(_camera(c, f"{where}.cameras[{i}]") for i, c in enumerate(cams))
    names = tuple(str(c.get("name", f"cam{i}")) for i, c in enumerate(cams))
    frames = []
    for i, f in enumerate(_get(d, "frames", where)):
        fw = f"{where}.frames[{i}]"
        index = int(_get(f, "index", fw))
        maps = _get(f, "maps", fw)
        if len(maps) != len(rig):
            raise ConfigError(f"{fw}.maps: {len(maps)} maps for {len(rig)} cameras")
        frames.append(
            FrameFiles(
                index,
                _file(root, _get(f, "cloud", fw), f"{fw}.cloud"),
                EgoPose(_transform(_get(f, "ego_pose", fw), f"{fw}.ego_pose"), index),
                tuple(_file(root, m, f"{fw}.maps[{c}]") for c, m in enumerate(maps)),
                _file(root, f["vocab"], f"{fw}.vocab") if f.get("vocab") else None,
            )
        )
    if not frames:
        raise ConfigError(f"{where}.frames: at least one frame is required")
    indices = [f.index for f in frames]
    if len(set(indices)) != len(indices):
        raise ConfigError(f"{where}.frames: duplicate frame indices {sorted(indices)}")
    target = d.get("target_frame")
    if target is not None and int(target) not in indices:
        raise ConfigError(f"{where}.target_frame: frame {target} is not in the sequence")
    window = d.get("window")
    if window is not None and int(window) < 0:
        raise ConfigError(f"{where}.window: must be non-negative, got {window}")
    boxes = tuple(_box(b, f"{where}.boxes[{i}]") for i, b in enumerate(d.get("boxes", [])))
    emb = _file(root, d["embeddings"], f"{where}.embeddings") if d.get("embeddings") else None
    gt = _file(root, d["ground_truth"], f"{where}.ground_truth") if d.get("ground_truth") else None
    return SequenceConfig(
        path,
        grid_from_dict(_get(d, "grid", where), f"{where}.grid"),
        None if target is None else int(target),
        None if window is None else int(window),
        rig,
        names,
        tuple(frames),
        boxes,
        emb,
        gt,
    )


def _check_map_headers(cfg: SequenceConfig) -> None:
    """Map sizes against the rig and one map kind per sequence, from LSG1 headers alone."""
    label_kind = set()
    for f in cfg.frames:
        for c, (p, cam) in enumerate(zip(f.maps, cfg.rig)):
            h, w, channels = formats.map_shape(p)
            if (h, w) != (cam.height, cam.width):
                raise ConfigError(
                    f"{p}: map is {w}x{h} but camera {cfg.camera_names[c]} is {cam.width}x{cam.height}"
                )
            label_kind.add(channels == 1)
    if len(label_kind) > 1:
        raise ConfigError(f"{cfg.path}: sequence mixes label maps and feature maps")


def read_sequence(cfg: SequenceConfig) -> SequenceData:
    """
    Read every artifact of the sequence and cross-check shapes, vocabularies
    and map kinds. Raises FormatError or ConfigError before any processing.
    """
    _check_map_headers(cfg)
    emb = formats.read_embeddings(cfg.embeddings) if cfg.embeddings is not None else None
    clouds, vocabs, all_maps = [], {}, {}
    for f in cfg.frames:
        cloud = formats.read_points(f.cloud)
        if cloud.frame_index != f.index:
            raise ConfigError(f"{f.cloud}: holds frame {cloud.frame_index}, sequence lists it as frame {f.index}")
        vocab = formats.read_vocab(f.vocab, VocabScope.FRAME) if f.vocab is not None else None
        clouds.append(cloud)
        if vocab is not None:
            vocabs[f.index] = vocab
        all_maps[f.index] = [formats.read_map(p, vocab) for p in f.maps]
    kinds = {type(m) for ms in all_maps.values() for m in ms}
    missing = [f.index for f in cfg.frames if f.vocab is None]
    if missing:
        raise ConfigError(f"{cfg.path}: frames {missing} have no vocabulary file")
    label_maps, feature_maps = None, None
    if kinds == {FeatureMap}:
        if emb is None or emb.vocab is None:
            raise ConfigError(f"{cfg.path}: feature maps need an embeddings file with a vocabulary sidecar")
        dims = {m.channels for ms in all_maps.values() for m in ms}
        if dims != {emb.dim}:
            raise ConfigError(f"{cfg.path}: feature maps have {sorted(dims)} channels, embeddings have {emb.dim}")
        unknown = sorted({x for v in vocabs.values() for x in v.labels if x not in emb.vocab})
        if unknown:
            raise ConfigError(f"{cfg.path}: no embedding for frame labels {unknown}")
        feature_maps = all_maps
    else:
        label_maps = all_maps
    seq = SensorSequence(cfg.rig, [f.ego_pose for f in cfg.frames], clouds, list(cfg.boxes))
    logger.info(
        "read sequence %s: %d frames, %d cameras, %d points",
        cfg.path, len(clouds), len(cfg.rig), sum(len(c) for c in clouds),
    )
    return SequenceData(cfg, seq, label_maps, feature_maps, vocabs, emb)


def make_pipeline_config(
    sequence: PathLike,
    output: PathLike,
    strategy: str = Strategy.MAJORITY.value,
    scope: str = VocabScope.SEQUENCE.value,
    report: Optional[PathLike] = None,
    workers: int = 1,
) -> PipelineConfig:
    try:
        strategy = Strategy(strategy)
    except ValueError:
        raise ConfigError(f"Unknown voxelization strategy {strategy!r}; expected one of {[s.value for s in Strategy]}")
    try:
        scope = VocabScope(scope)
    except ValueError:
        scope = None
    if scope not in (VocabScope.FRAME, VocabScope.SEQUENCE):
        raise ConfigError("Vocabulary scope must be 'per-frame' or 'per-sequence'")
    if workers < 1:
        raise ConfigError(f"Worker count must be >= 1, got {workers}")
    return PipelineConfig(
        load_sequence(sequence), strategy, scope, Path(output), None if report is None else Path(report), int(workers)
    )


def _rel(path: Path, root: Path) -> str:
    return path.relative_to(root).as_posix()


def write_scene(
    scene: SyntheticScene,
    out_dir: PathLike,
    scope: Optional[VocabScope] = None,
    features: bool = False,
) -> Path:
    """
    Write a synthetic scene as a sequence directory (clouds, maps, frame
    vocabularies, embeddings, target-frame ground truth, sequence.json).
    Label maps carry label noise at `scope`; with `features` the raw
    per-pixel features are written instead.
    """
    root = Path(out_dir)
    cfg = scene.config
    maps = scene.seg_maps if scope is None else segment_scene(scene, scope)
    frames = []
    for k in range(cfg.frames):
        cloud = root / "frames" / f"{k:03d}.lpc"
        formats.write_points(cloud, scene.clouds[k])
        map_paths = []
        for c in range(len(cfg.cameras)):
            p = root / "frames" / f"{k:03d}_cam{c}.lsg"
            formats.write_map(p, scene.features[k][c] if features else maps[k][c])
            map_paths.append(_rel(p, root))
        vocab = scene.frame_vocabs[k] if features and scene.frame_vocabs else maps[k][0].vocab
        vp = root / "frames" / f"{k:03d}.vocab.txt"
        formats.write_vocab(vp, vocab if vocab is not None else VocabularySet([]))
        frames.append(
            {
                "index": k,
                "cloud": _rel(cloud, root),
                "ego_pose": _matrix_list(to_matrix(scene.poses[k].world_from_ego)),
                "maps": map_paths,
                "vocab": _rel(vp, root),
            }
        )

    doc: Dict[str, Any] = {
        "format": SEQUENCE_FORMAT,
        "version": SEQUENCE_VERSION,
        "grid": grid_to_dict(cfg.grid),
        "target_frame": cfg.target,
        "window": None,
        "cameras": [
            {
                "name": spec.name,
                "intrinsics": _matrix_list(cam.intrinsics),
                "cam_from_ego": _matrix_list(to_matrix(cam.cam_from_ego)),
                "width": int(cam.width),
                "height": int(cam.height),
            }
            for spec, cam in zip(cfg.cameras, scene.rig)
        ],
        "frames": frames,
        "boxes": [
            {
                "track_id": b.track_id,
                "frame": b.frame_index,
                "center": [float(x) for x in b.center],
                "size": [float(x) for x in b.size],
                "yaw": float(b.yaw),
                "moving": bool(b.is_moving),
            }
            for b in scene.boxes
        ],
    }
    if scene.embeddings is not None:
        formats.write_embeddings(root / "embeddings.lem", scene.embeddings)
        doc["embeddings"] = "embeddings.lem"
    gt = scene.gt_grids[cfg.target]
    formats.write_grid(root / "gt.lvx", gt)
    doc["ground_truth"] = "gt.lvx"
    out = root / "sequence.json"
    _save_json(out, doc)
    logger.info("wrote scene (%d frames) to %s", cfg.frames, root)
    return out


def load_overrides(path: PathLike) -> Dict[str, str]:
    """Label -> class name map forcing canonical-class assignments."""
    d = _load_json(path)
    bad = [k for k, v in d.items() if not isinstance(v, str)]
    if bad:
        raise ConfigError(f"{path}: override values must be class names, got non-text values for {bad}")
    return {str(k): v for k, v in d.items()}


def read_ground_truth(cfg: SequenceConfig) -> Optional[VoxelGrid]:
    if cfg.ground_truth is None:
        return None
    spec = formats.read_grid_spec(cfg.ground_truth)
    if not spec.matches(cfg.grid):
        raise ConfigError(f"{cfg.ground_truth}: grid {spec} does not match the sequence grid {cfg.grid}")
    return formats.read_grid(cfg.ground_truth, VocabScope.DATASET)
