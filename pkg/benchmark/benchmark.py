"""
Label-transfer and voxelization benchmarking.

Measures: point label transfer, multi-frame aggregation, majority / nearest
voxelization and voxel model-view projection over growing point counts, on the
default 200 x 200 x 16 grid with a six-camera rig. Inputs are seeded random
points and random label maps, so nothing here touches real data.
"""

import csv
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

# Project root on path
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from semocc import (
    DEFAULT_GRID,
    EgoPose,
    PointCloud,
    SegmentationMap,
    VocabularySet,
    aggregate,
    assign_point_labels,
    binary_occupancy,
    look_rotation,
    make_camera,
    make_transform,
    pinhole_intrinsics,
    translation,
    voxel_modelview_labels,
    voxelize_majority,
    voxelize_nearest,
)
from semocc.evaluation import DEFAULT_CLASS_NAMES
from semocc.seeding import LABEL_BENCH, derive_rng

BENCHMARK_COUNTS = (10_000, 100_000, 500_000)
FRAMES = 3
IMAGE_SIZE = (320, 240)
STAGES = ("label_sec", "aggregate_sec", "majority_sec", "nearest_sec", "modelview_sec")


def _rig(width: int, height: int) -> list:
    """Six cameras 60 degrees apart at 1.8 m, like a surround-view rig."""
    origin = np.array([0.0, 0.0, 1.8])
    focal = (width / 2.0) / np.tan(np.radians(35.0))
    k = pinhole_intrinsics(focal, focal, width / 2.0, height / 2.0)
    rig = []
    for yaw in np.radians(np.arange(0.0, 360.0, 60.0)):
        r = look_rotation((np.cos(yaw), np.sin(yaw), 0.0))
        rig.append(make_camera(k, make_transform(r, -(r @ origin)), width, height))
    return rig


def _inputs(n_points: int, seed: int):
    vocab = VocabularySet(DEFAULT_CLASS_NAMES[:-1])
    rig = _rig(*IMAGE_SIZE)
    lo = np.asarray(DEFAULT_GRID.origin)
    hi = np.asarray(DEFAULT_GRID.upper)
    clouds, maps, poses = [], [], []
    for k in range(FRAMES):
        rng = derive_rng(seed, LABEL_BENCH, k)
        clouds.append(PointCloud(k, rng.uniform(lo, hi, size=(n_points // FRAMES, 3))))
        w, h = IMAGE_SIZE
        maps.append([SegmentationMap(rng.integers(0, len(vocab), size=(h, w)), vocab) for _ in rig])
        poses.append(EgoPose(translation(0.5 * k, 0.0, 0.0), k))
    return rig, clouds, maps, poses


def _timed(fn) -> Tuple[Any, float]:
    t0 = time.perf_counter()
    out = fn()
    return out, round(time.perf_counter() - t0, 4)


def _compute_scaling_analysis(results: List[Dict[str, Any]]) -> Dict[str, Any]:
    """Per-point rates and a linearity check from the benchmark rows."""
    valid = [r for r in results if r.get("error") is None and r.get("label_sec", -1) >= 0]
    if not valid:
        return {
            "summary": "Insufficient data for scaling analysis.",
            "label_us_per_point": None,
            "majority_us_per_point": None,
        }
    largest = max(valid, key=lambda r: r["num_points"])
    n = largest["num_points"]
    label_us = largest["label_sec"] / n * 1e6 if n else None
    majority_us = largest["majority_sec"] / n * 1e6 if n else None
    parts = []
    if label_us is not None:
        parts.append(f"Label transfer: ~{label_us:.2f} us per point.")
    if majority_us is not None:
        parts.append(f"Majority voxelization: ~{majority_us:.2f} us per point.")
    if len(valid) >= 2:
        r0, r1 = valid[0], valid[-1]
        n0, n1 = r0["num_points"], r1["num_points"]
        t0, t1 = r0["label_sec"], r1["label_sec"]
        if t0 and t1 and n0 < n1 and 0.5 <= (t1 / t0) / (n1 / n0) <= 2.0:
            parts.append("Scaling: label transfer time grows approximately linearly with point count.")
    return {
        "summary": " ".join(parts) if parts else "See per-run metrics.",
        "label_us_per_point": round(label_us, 4) if label_us is not None else None,
        "majority_us_per_point": round(majority_us, 4) if majority_us is not None else None,
        "max_n_tested": n,
    }


def run_benchmark(
    counts: Tuple[int, ...] = BENCHMARK_COUNTS,
    workers: int = 1,
    seed: int = 0,
    csv_path: Optional[Path] = None,
) -> Dict[str, Any]:
    """
    Time each pipeline stage per point count. Returns the per-run rows, the
    scaling analysis and the grid used.
    """
    results: List[Dict[str, Any]] = []
    for count in counts:
        row: Dict[str, Any] = {"num_points": count, "frames": FRAMES, "workers": workers}
        try:
            rig, clouds, maps, poses = _inputs(count, seed)
            labeled, row["label_sec"] = _timed(
                lambda: [assign_point_labels(c, rig, maps[c.frame_index], workers) for c in clouds]
            )
            agg, row["aggregate_sec"] = _timed(lambda: aggregate(labeled, poses, [], FRAMES - 1, workers=workers))
            majority, row["majority_sec"] = _timed(lambda: voxelize_majority(agg, DEFAULT_GRID, workers))
            _, row["nearest_sec"] = _timed(lambda: voxelize_nearest(agg, DEFAULT_GRID, workers))
            _, row["modelview_sec"] = _timed(
                lambda: voxel_modelview_labels(binary_occupancy(majority), rig, maps[FRAMES - 1], workers)
            )
            row["occupied_voxels"] = int(majority.occupied.sum())
        except Exception as e:
            row["error"] = str(e)
            for key in STAGES:
                row.setdefault(key, -1)
            row.setdefault("occupied_voxels", -1)
        results.append(row)

    out: Dict[str, Any] = {
        "benchmark_results": results,
        "point_counts": list(counts),
        "grid_dims": list(DEFAULT_GRID.dims),
        "scaling_analysis": _compute_scaling_analysis(results),
    }
    if csv_path:
        fieldnames = ["num_points", "frames", "workers", *STAGES, "occupied_voxels"]
        if any("error" in r for r in results):
            fieldnames.append("error")
        with open(csv_path, "w", newline="", encoding="utf-8") as f:
            w = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore")
            w.writeheader()
            w.writerows(results)
    return out
