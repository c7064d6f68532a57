"""
IoU / mIoU scoring, zero-shot inference and open-vocabulary label mapping.

Grids being scored hold class indices of a ClassSet. FREE is the free class;
UNLABELED counts as occupied but matches no semantic class.
"""

import logging
from enum import Enum
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .losses import OCCUPIED_LOGIT, FREE_LOGIT, PredictionVolume
from .parallel import map_chunks
from .reconstruction import GridSpec, VoxelGrid, make_grid_spec
from .vocab import (
    FREE,
    LABEL_DTYPE,
    UNLABELED,
    EmbeddingMatrix,
    VocabScope,
    VocabularySet,
    canonicalize,
    classify_many,
    is_sentinel,
    remap_labels,
)

logger = logging.getLogger(__name__)

DEFAULT_CLASS_NAMES = (
    "barrier",
    "bicycle",
    "bus",
    "car",
    "construction_vehicle",
    "motorcycle",
    "pedestrian",
    "traffic_cone",
    "trailer",
    "truck",
    "driveable_surface",
    "other_flat",
    "sidewalk",
    "terrain",
    "manmade",
    "vegetation",
    "free",
)


class Subset(str, Enum):
    ALL = "all"
    BASE = "base"
    NOVEL = "novel"


class ClassSet:
    """Semantic class names followed by the free class (always last)."""

    def __init__(self, names: Sequence[str] = DEFAULT_CLASS_NAMES, base_mask=None):
        names = tuple(canonicalize(n) for n in names)
        if len(names) < 2:
            raise ValueError("A class set needs at least one semantic class plus free")
        if len(set(names)) != len(names):
            raise ValueError("Duplicate class names")
        if base_mask is not None:
            base_mask = np.asarray(base_mask, dtype=bool).reshape(-1)
            if base_mask.shape[0] != len(names) - 1:
                raise ValueError(f"base_mask has {base_mask.shape[0]} flags for {len(names) - 1} semantic classes")
        self.names = names
        self.base_mask = base_mask

    @property
    def n_semantic(self) -> int:
        return len(self.names) - 1

    @property
    def free_index(self) -> int:
        return len(self.names) - 1

    @property
    def semantic_names(self):
        return self.names[:-1]

    def vocab(self) -> VocabularySet:
        return VocabularySet(self.semantic_names, scope=VocabScope.DATASET)

    def with_base(self, base_names: Sequence[str]) -> "ClassSet":
        wanted = {canonicalize(n) for n in base_names}
        unknown = wanted - set(self.semantic_names)
        if unknown:
            raise ValueError(f"Unknown base classes: {sorted(unknown)}")
        return ClassSet(self.names, [n in wanted for n in self.semantic_names])

    def selected(self, subset: Subset) -> np.ndarray:
        """Semantic class flags entering the mean for `subset`."""
        subset = Subset(subset)
        if subset == Subset.ALL:
            return np.ones(self.n_semantic, dtype=bool)
        if self.base_mask is None:
            raise ValueError(f"Subset {subset.value!r} needs a class set with a base/novel split")
        return self.base_mask.copy() if subset == Subset.BASE else ~self.base_mask


class MetricReport(NamedTuple):
    class_names: tuple
    per_class_iou: np.ndarray  # NaN where undefined (class absent from both grids)
    miou: float
    occupancy_iou: float
    intersections: np.ndarray
    unions: np.ndarray
    gt_counts: np.ndarray
    pred_counts: np.ndarray
    subset: Subset = Subset.ALL
    tag: str = ""

    def with_tag(self, tag: str) -> "MetricReport":
        return self._replace(tag=tag)


def _class_rows(emb: EmbeddingMatrix, vocab: VocabularySet) -> np.ndarray:
    if emb.vocab is not None and emb.vocab.labels != vocab.labels:
        return emb.subset(vocab).rows
    if len(emb) != len(vocab):
        raise ValueError(f"Embedding has {len(emb)} rows for {len(vocab)} vocabulary labels")
    return emb.rows


def canonical_map(
    vocab: VocabularySet,
    emb: EmbeddingMatrix,
    classes: ClassSet,
    class_emb: EmbeddingMatrix,
    overrides: Optional[Mapping[str, str]] = None,
) -> np.ndarray:
    """
    Class index per vocabulary label: argmax cosine against the class
    embeddings (rows follow classes.names, free row optional), with
    `overrides` (label -> class name) taking precedence.
    """
    if emb.dim != class_emb.dim:
        raise ValueError(f"Label embeddings have dimension {emb.dim}, class embeddings {class_emb.dim}")
    if len(class_emb) not in (len(classes.names), classes.n_semantic):
        raise ValueError(f"{len(class_emb)} class embeddings for {len(classes.names)} classes")
    rows = _class_rows(emb, vocab)
    mapping, _ = classify_many(rows, EmbeddingMatrix(class_emb.rows))
    mapping = mapping.astype(np.int64)
    for label, cls in (overrides or {}).items():
        if label not in vocab:
            continue
        cls = canonicalize(cls)
        if cls not in classes.names:
            raise ValueError(f"Override maps {label!r} to unknown class {cls!r}")
        mapping[vocab.index_of(label)] = classes.names.index(cls)
    return mapping


def apply_label_map(grid: VoxelGrid, mapping, classes: ClassSet) -> VoxelGrid:
    """Relabel a grid into class indices; labels mapped to free become FREE."""
    mapping = np.asarray(mapping, dtype=np.int64)
    lab = grid.labels.astype(np.int64)
    real = ~is_sentinel(grid.labels)
    if np.any(lab[real] >= mapping.shape[0]):
        raise ValueError(f"Grid label id {int(lab[real].max())} has no class mapping ({mapping.shape[0]} entries)")
    out = grid.labels.copy()
    mapped = mapping[lab[real]]
    out[real] = np.where(mapped == classes.free_index, FREE, mapped).astype(LABEL_DTYPE)
    return VoxelGrid(grid.spec, out, classes.vocab())


def to_class_grid(grid: VoxelGrid, vocab: VocabularySet, classes: ClassSet) -> VoxelGrid:
    """Relabel a grid from `vocab` ids to class indices by label text; unknown labels become UNLABELED."""
    return VoxelGrid(grid.spec, remap_labels(grid.labels, vocab, classes.vocab()), classes.vocab())


def infer_semantics(
    pred: PredictionVolume, class_emb: EmbeddingMatrix, spec: Optional[GridSpec] = None
) -> VoxelGrid:
    """Occupied where the occupied logit beats the free logit; label = best-cosine class."""
    if pred.latent_dim != class_emb.dim:
        raise ValueError(f"Language dimension {pred.latent_dim} does not match class embeddings {class_emb.dim}")
    spec = spec or pred.spec or make_grid_spec((0.0, 0.0, 0.0), 1.0, pred.dims)
    occ = pred.geometry[..., OCCUPIED_LOGIT] > pred.geometry[..., FREE_LOGIT]
    out = np.full(pred.dims, FREE, dtype=LABEL_DTYPE)
    if np.any(occ):
        labels, _ = classify_many(pred.language[occ], class_emb)
        if np.any(labels == UNLABELED):
            bad = tuple(int(x) for x in np.argwhere(occ)[np.flatnonzero(labels == UNLABELED)[0]])
            raise ValueError(f"Zero-norm language vector at occupied voxel {bad}")
        out[occ] = labels
    return VoxelGrid(spec, out, class_emb.vocab)


def _class_index(labels: np.ndarray, classes: ClassSet, which: str) -> np.ndarray:
    """Class index per voxel; UNLABELED -> n_classes (the 'no class' bucket)."""
    k = len(classes.names)
    idx = labels.astype(np.int64)
    real = ~is_sentinel(labels)
    if np.any(idx[real] >= classes.n_semantic):
        raise ValueError(f"{which} grid holds label id {int(idx[real].max())} outside the class set")
    idx = np.where(labels == FREE, classes.free_index, idx)
    return np.where(labels == UNLABELED, k, idx)


def confusion(pred: VoxelGrid, gt: VoxelGrid, classes: ClassSet, mask=None, workers: Optional[int] = None) -> np.ndarray:
    """(K+1) x (K+1) counts, rows = gt, cols = pred; last row/col is 'no class'."""
    k1 = len(classes.names) + 1
    g = _class_index(gt.labels.ravel(), classes, "Ground-truth")
    p = _class_index(pred.labels.ravel(), classes, "Predicted")
    if mask is not None:
        m = np.asarray(mask, dtype=bool).ravel()
        if m.shape[0] != g.shape[0]:
            raise ValueError(f"Mask has {m.shape[0]} voxels, grids have {g.shape[0]}")
        g, p = g[m], p[m]
    parts = map_chunks(lambda a, b: np.bincount(g[a:b] * k1 + p[a:b], minlength=k1 * k1), g.shape[0], workers)
    return np.sum(parts, axis=0).reshape(k1, k1)


def score(
    pred_grid: VoxelGrid,
    gt_grid: VoxelGrid,
    classes: ClassSet = ClassSet(),
    subset: Subset = Subset.ALL,
    mask=None,
    absent_as_zero: bool = False,
    workers: Optional[int] = None,
) -> MetricReport:
    """
    Per-class IoU over all classes (free included), semantic mIoU over the
    selected classes present in either grid, and binary occupancy IoU.
    """
    if not pred_grid.spec.matches(gt_grid.spec):
        raise ValueError(f"Grid specs differ: {pred_grid.spec} vs {gt_grid.spec}")
    k = len(classes.names)
    conf = confusion(pred_grid, gt_grid, classes, mask, workers)
    inter = np.diag(conf)[:k].astype(np.int64)
    gt_counts = conf.sum(axis=1)[:k].astype(np.int64)
    pred_counts = conf.sum(axis=0)[:k].astype(np.int64)
    unions = gt_counts + pred_counts - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(unions > 0, inter / np.maximum(unions, 1), np.nan)

    sem = iou[: classes.n_semantic]
    chosen = classes.selected(subset)
    if absent_as_zero:
        values = np.nan_to_num(sem[chosen], nan=0.0)
    else:
        values = sem[chosen & ~np.isnan(sem)]
    miou = float(np.mean(values)) if values.size else float("nan")

    # occupancy: every non-free bucket (semantic + 'no class') is occupied
    f = classes.free_index
    occ_inter = int(conf.sum() - conf[f, :].sum() - conf[:, f].sum() + conf[f, f])
    occ_union = int(conf.sum() - conf[f, f])
    occupancy_iou = occ_inter / occ_union if occ_union else float("nan")
    return MetricReport(
        classes.names, iou, miou, float(occupancy_iou), inter, unions, gt_counts, pred_counts, Subset(subset)
    )


def format_report(report: MetricReport) -> str:
    """Plain-text table: one row per class, then the summary lines."""
    width = max(len(n) for n in report.class_names)
    title = f"Metric report{f' [{report.tag}]' if report.tag else ''} (subset: {report.subset.value})"
    lines: List[str] = [title, f"{'class':<{width}}  {'IoU':>7}  {'gt':>9}  {'pred':>9}"]
    for name, iou, g, p in zip(report.class_names, report.per_class_iou, report.gt_counts, report.pred_counts):
        shown = "    n/a" if np.isnan(iou) else f"{iou:7.4f}"
        lines.append(f"{name:<{width}}  {shown}  {int(g):>9}  {int(p):>9}")
    lines.append(f"mIoU: {report.miou:.4f}")
    lines.append(f"occupancy IoU: {report.occupancy_iou:.4f}")
    return "\n".join(lines)


def _json_float(x: float):
    return None if np.isnan(x) else float(x)


def report_to_dict(report: MetricReport) -> Dict[str, object]:
    return {
        "tag": report.tag,
        "subset": report.subset.value,
        "miou": _json_float(report.miou),
        "occupancy_iou": _json_float(report.occupancy_iou),
        "per_class_iou": {n: _json_float(v) for n, v in zip(report.class_names, report.per_class_iou)},
        "gt_counts": {n: int(v) for n, v in zip(report.class_names, report.gt_counts)},
        "pred_counts": {n: int(v) for n, v in zip(report.class_names, report.pred_counts)},
    }
