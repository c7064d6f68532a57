"""
Little-endian binary artifacts.

  LPC1  point cloud: u32 version, u32 frame, u64 count, u32 flags, then per
        point f32 x, y, z [+ u16 label (flag bit 0)] [+ u32 source frame (bit 1)]
  LSG1  map: u32 H, u32 W, u32 channels; channels = 1 -> u16 label cells,
        channels > 1 -> f32 feature cells; row-major
  LEM1  embeddings: u32 N, u32 D, N * D f32 row-major; labels in a sidecar
  LVX1  voxel grid: 3 f32 origin, f32 voxel size, 3 u32 dims, X*Y*Z u16 labels
        (X-major, Z-minor)
  LAE1  autoencoder: u32 layers, u32 encoder layers, per layer (u32 rows,
        u32 cols, u32 activation tag), then per layer W (rows*cols f32) and
        bias (rows f32)

Vocabulary sidecars are UTF-8 text, one label per line, line number = label id.
"""

import os
import struct
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from semocc.autoencoder import ACTIVATION_BY_TAG, AutoencoderParams, Layer, make_params
from semocc.pixels import FeatureMap, SegmentationMap
from semocc.points import PointCloud
from semocc.reconstruction import GridSpec, SceneAggregate, VoxelGrid, make_grid_spec
from semocc.vocab import EmbeddingMatrix, VocabScope, VocabularySet, is_sentinel

PathLike = Union[str, Path]

POINTS_VERSION = 1
FLAG_LABELS = 1
FLAG_SOURCES = 2
KNOWN_FLAGS = FLAG_LABELS | FLAG_SOURCES

POINTS_HEADER = struct.Struct("<4sIIQI")
MAP_HEADER = struct.Struct("<4sIII")
EMBED_HEADER = struct.Struct("<4sII")
GRID_HEADER = struct.Struct("<4s3ff3I")
AE_HEADER = struct.Struct("<4sII")
AE_LAYER = struct.Struct("<III")

MAGIC_POINTS = b"LPC1"
MAGIC_MAP = b"LSG1"
MAGIC_EMBED = b"LEM1"
MAGIC_GRID = b"LVX1"
MAGIC_AE = b"LAE1"


class FormatError(ValueError):
    """Malformed artifact: bad magic, truncated payload, or inconsistent header."""


def _read(path: PathLike) -> bytes:
    return Path(path).read_bytes()


def _write(path: PathLike, payload: bytes) -> None:
    """Write through a temporary file so readers never see a partial artifact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _header(data: bytes, fmt: struct.Struct, magic: bytes, path: PathLike) -> tuple:
    if len(data) < 4 or data[:4] != magic:
        raise FormatError(f"{path}: bad magic at byte 0: expected {magic!r}, got {data[:4]!r}")
    if len(data) < fmt.size:
        raise FormatError(
            f"{path}: truncated header at byte {len(data)}: expected {fmt.size} bytes, got {len(data)}"
        )
    return fmt.unpack_from(data, 0)


def _check_size(data: bytes, expected: int, path: PathLike, offset: int) -> None:
    if len(data) < expected:
        raise FormatError(
            f"{path}: truncated payload at byte {len(data)} (payload starts at byte {offset}): "
            f"expected {expected} bytes, got {len(data)}"
        )
    if len(data) > expected:
        raise FormatError(
            f"{path}: inconsistent header: expected {expected} bytes, got {len(data)} "
            f"(trailing data at byte {expected})"
        )


def _check_ids(labels: np.ndarray, vocab: VocabularySet, path: PathLike, offset: int) -> None:
    """u16 label ids starting at `offset` must be sentinels or index `vocab`."""
    bad = np.flatnonzero(~is_sentinel(labels) & (labels >= len(vocab)))
    if bad.size:
        i = int(bad[0])
        raise FormatError(
            f"{path}: label id {int(labels[i])} at byte {offset + 2 * i} >= vocabulary size {len(vocab)}"
        )


def vocab_sidecar(path: PathLike) -> Path:
    """foo.lem -> foo.vocab.txt"""
    return Path(path).with_suffix(".vocab.txt")


def write_vocab(path: PathLike, vocab: VocabularySet) -> None:
    _write(path, "".join(label + "\n" for label in vocab.labels).encode("utf-8"))


def read_vocab(path: PathLike, scope: VocabScope = VocabScope.FRAME) -> VocabularySet:
    text = Path(path).read_text(encoding="utf-8")
    labels = text.split("\n")
    if labels and labels[-1] == "":
        labels.pop()
    try:
        return VocabularySet(labels, scope=scope)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


# -- point clouds -------------------------------------------------------------

def _point_dtype(flags: int) -> np.dtype:
    fields = [("xyz", "<f4", (3,))]
    if flags & FLAG_LABELS:
        fields.append(("label", "<u2"))
    if flags & FLAG_SOURCES:
        fields.append(("source", "<u4"))
    return np.dtype(fields)


def _encode_points(frame: int, points: np.ndarray, labels, sources) -> bytes:
    flags = (FLAG_LABELS if labels is not None else 0) | (FLAG_SOURCES if sources is not None else 0)
    rec = np.zeros(points.shape[0], dtype=_point_dtype(flags))
    rec["xyz"] = points
    if labels is not None:
        rec["label"] = labels
    if sources is not None:
        rec["source"] = sources
    return POINTS_HEADER.pack(MAGIC_POINTS, POINTS_VERSION, frame, points.shape[0], flags) + rec.tobytes()


def _decode_points(path: PathLike):
    data = _read(path)
    _, version, frame, count, flags = _header(data, POINTS_HEADER, MAGIC_POINTS, path)
    if version != POINTS_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte 4 (expected {POINTS_VERSION})")
    if flags & ~KNOWN_FLAGS:
        raise FormatError(f"{path}: unsupported flags {flags:#x} at byte 20")
    dtype = _point_dtype(flags)
    _check_size(data, POINTS_HEADER.size + count * dtype.itemsize, path, POINTS_HEADER.size)
    rec = np.frombuffer(data, dtype=dtype, count=count, offset=POINTS_HEADER.size)
    points = rec["xyz"].astype(np.float64)
    labels = rec["label"].copy() if flags & FLAG_LABELS else None
    sources = rec["source"].astype(np.int64) if flags & FLAG_SOURCES else None
    return frame, points, labels, sources


def write_points(path: PathLike, cloud: PointCloud) -> None:
    _write(path, _encode_points(cloud.frame_index, cloud.points, cloud.labels, None))


def read_points(path: PathLike, vocab: Optional[VocabularySet] = None) -> PointCloud:
    frame, points, labels, _ = _decode_points(path)
    try:
        return PointCloud(frame, points, labels, vocab)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


def write_aggregate(path: PathLike, agg: SceneAggregate) -> None:
    """LPC1 with labels and source frames; frame field = target frame."""
    _write(path, _encode_points(agg.target_frame, agg.points, agg.labels, agg.source_frames))


def read_aggregate(path: PathLike, vocab: Optional[VocabularySet] = None) -> SceneAggregate:
    frame, points, labels, sources = _decode_points(path)
    if labels is None or sources is None:
        raise FormatError(f"{path}: aggregate files need label and source-frame columns (flags at byte 20)")
    return SceneAggregate(frame, points, labels, sources, vocab)


# -- maps ---------------------------------------------------------------------

def write_map(path: PathLike, m: Union[SegmentationMap, FeatureMap]) -> None:
    if isinstance(m, SegmentationMap):
        body = m.data.astype("<u2").tobytes()
        channels = 1
    else:
        if m.channels < 2:
            raise ValueError("Feature maps need at least two channels (one channel means labels)")
        body = m.data.astype("<f4").tobytes()
        channels = m.channels
    _write(path, MAP_HEADER.pack(MAGIC_MAP, m.height, m.width, channels) + body)


def map_shape(path: PathLike) -> Tuple[int, int, int]:
    """(H, W, channels) from the header only."""
    with open(path, "rb") as f:
        head = f.read(MAP_HEADER.size)
    _, h, w, c = _header(head, MAP_HEADER, MAGIC_MAP, path)
    return h, w, c


def read_map(path: PathLike, vocab: Optional[VocabularySet] = None) -> Union[SegmentationMap, FeatureMap]:
    data = _read(path)
    _, h, w, c = _header(data, MAP_HEADER, MAGIC_MAP, path)
    if h == 0 or w == 0 or c == 0:
        raise FormatError(f"{path}: inconsistent header at byte 4: empty map {h}x{w}x{c}")
    cell = 2 if c == 1 else 4 * c
    _check_size(data, MAP_HEADER.size + h * w * cell, path, MAP_HEADER.size)
    if c == 1:
        cells = np.frombuffer(data, dtype="<u2", count=h * w, offset=MAP_HEADER.size)
        if vocab is not None:
            _check_ids(cells, vocab, path, MAP_HEADER.size)
        return SegmentationMap(cells.reshape(h, w), vocab)
    try:
        cells = np.frombuffer(data, dtype="<f4", count=h * w * c, offset=MAP_HEADER.size)
        return FeatureMap(cells.reshape(h, w, c))
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


# -- embeddings ---------------------------------------------------------------

def write_embeddings(path: PathLike, emb: EmbeddingMatrix) -> None:
    n, d = emb.rows.shape
    _write(path, EMBED_HEADER.pack(MAGIC_EMBED, n, d) + emb.rows.astype("<f4").tobytes())
    if emb.vocab is not None:
        write_vocab(vocab_sidecar(path), emb.vocab)


def read_embeddings(path: PathLike, scope: VocabScope = VocabScope.DATASET) -> EmbeddingMatrix:
    data = _read(path)
    _, n, d = _header(data, EMBED_HEADER, MAGIC_EMBED, path)
    _check_size(data, EMBED_HEADER.size + 4 * n * d, path, EMBED_HEADER.size)
    rows = np.frombuffer(data, dtype="<f4", count=n * d, offset=EMBED_HEADER.size).reshape(n, d)
    sidecar = vocab_sidecar(path)
    vocab = read_vocab(sidecar, scope) if sidecar.exists() else None
    if vocab is not None and len(vocab) != n:
        raise FormatError(f"{sidecar}: {len(vocab)} labels but {path} header declares {n} rows at byte 4")
    try:
        return EmbeddingMatrix(rows.astype(np.float64), vocab)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e


# -- voxel grids --------------------------------------------------------------

def write_grid(path: PathLike, grid: VoxelGrid) -> None:
    s = grid.spec
    head = GRID_HEADER.pack(MAGIC_GRID, *s.origin, s.voxel_size, *s.dims)
    _write(path, head + grid.labels.astype("<u2").tobytes(order="C"))
    if grid.vocab is not None:
        write_vocab(vocab_sidecar(path), grid.vocab)


def read_grid_spec(path: PathLike) -> GridSpec:
    with open(path, "rb") as f:
        head = f.read(GRID_HEADER.size)
    v = _header(head, GRID_HEADER, MAGIC_GRID, path)
    return _grid_spec(v, path)


def _grid_spec(v: tuple, path: PathLike) -> GridSpec:
    try:
        return make_grid_spec(v[1:4], v[4], v[5:8])
    except ValueError as e:
        raise FormatError(f"{path}: inconsistent header at byte 4: {e}") from e


def read_grid(path: PathLike, scope: VocabScope = VocabScope.SEQUENCE) -> VoxelGrid:
    data = _read(path)
    spec = _grid_spec(_header(data, GRID_HEADER, MAGIC_GRID, path), path)
    _check_size(data, GRID_HEADER.size + 2 * spec.n_voxels, path, GRID_HEADER.size)
    labels = np.frombuffer(data, dtype="<u2", count=spec.n_voxels, offset=GRID_HEADER.size)
    sidecar = vocab_sidecar(path)
    vocab = read_vocab(sidecar, scope) if sidecar.exists() else None
    if vocab is not None:
        _check_ids(labels, vocab, path, GRID_HEADER.size)
    return VoxelGrid(spec, labels.reshape(spec.dims), vocab)


# -- autoencoder checkpoints --------------------------------------------------

def write_autoencoder(path: PathLike, params: AutoencoderParams) -> None:
    layers = params.layers
    parts = [AE_HEADER.pack(MAGIC_AE, len(layers), len(params.encoder))]
    for layer in layers:
        parts.append(AE_LAYER.pack(layer.out_dim, layer.in_dim, layer.activation.tag))
    for layer in layers:
        parts.append(layer.weight.astype("<f4").tobytes(order="C"))
        parts.append(layer.bias.astype("<f4").tobytes())
    _write(path, b"".join(parts))


def read_autoencoder(path: PathLike) -> AutoencoderParams:
    data = _read(path)
    _, n_layers, n_enc = _header(data, AE_HEADER, MAGIC_AE, path)
    if not 0 < n_enc < n_layers:
        raise FormatError(f"{path}: inconsistent header at byte 4: {n_enc} encoder layers of {n_layers}")
    table_end = AE_HEADER.size + n_layers * AE_LAYER.size
    if len(data) < table_end:
        raise FormatError(
            f"{path}: truncated layer table at byte {len(data)}: expected {table_end} bytes, got {len(data)}"
        )
    shapes = []
    for i in range(n_layers):
        rows, cols, tag = AE_LAYER.unpack_from(data, AE_HEADER.size + i * AE_LAYER.size)
        if tag not in ACTIVATION_BY_TAG:
            raise FormatError(f"{path}: unknown activation tag {tag} at byte {AE_HEADER.size + i * AE_LAYER.size + 8}")
        shapes.append((rows, cols, ACTIVATION_BY_TAG[tag]))
    _check_size(data, table_end + 4 * sum(r * c + r for r, c, _ in shapes), path, table_end)
    offset = table_end
    layers = []
    for rows, cols, act in shapes:
        w = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=offset).reshape(rows, cols)
        offset += 4 * rows * cols
        b = np.frombuffer(data, dtype="<f4", count=rows, offset=offset)
        offset += 4 * rows
        layers.append(Layer(w.astype(np.float64), b.astype(np.float64), act))
    try:
        return make_params(layers[:n_enc], layers[n_enc:])
    except ValueError as e:
        raise FormatError(f"{path}: inconsistent header: {e}") from e
