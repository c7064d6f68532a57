"""
Pipeline-vs-oracle scoring and the pipeline ablation.

Settings:
  a  feature lifting, voxel-mean feature classified (consecutive-frame vocab)
  b  majority voxelization, single-frame vocabularies
  c  majority voxelization, consecutive-frame (merged) vocabulary
  d  nearest-point voxelization, consecutive-frame vocabulary
  e  voxel model-view projection, consecutive-frame vocabulary

Scores count only voxels holding at least one LiDAR return that some camera
of its frame sees. All settings of one seed share the same scene and the same
noise draws.
"""

import logging
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.stats import binomtest
from tqdm import tqdm

from semocc.evaluation import ClassSet, MetricReport, score, to_class_grid
from semocc.pipeline import observed_voxels, run_feature_pipeline, run_pipeline
from semocc.reconstruction import Strategy
from semocc.vocab import VocabScope, merge_sequence_vocab

from .scene import SceneConfig, SyntheticScene, generate, segment_scene, sensor_sequence

logger = logging.getLogger(__name__)

FEATURES = "features"


class Setting(NamedTuple):
    key: str
    name: str
    scope: VocabScope
    strategy: str  # a Strategy value or FEATURES


SETTINGS = (
    Setting("a", "feature lifting", VocabScope.SEQUENCE, FEATURES),
    Setting("b", "single-frame vocab", VocabScope.FRAME, Strategy.MAJORITY.value),
    Setting("c", "consecutive-frame vocab", VocabScope.SEQUENCE, Strategy.MAJORITY.value),
    Setting("d", "nearest voxelization", VocabScope.SEQUENCE, Strategy.NEAREST.value),
    Setting("e", "model-view projection", VocabScope.SEQUENCE, Strategy.MODELVIEW.value),
)
SETTING_BY_KEY = {s.key: s for s in SETTINGS}

# (better, worse) pairs checked by the sign test
COMPARISONS = (("c", "d"), ("d", "e"), ("c", "b"))


def scene_classes() -> ClassSet:
    """Synthetic labels are drawn from the default evaluation classes."""
    return ClassSet()


def observation_mask(scene: SyntheticScene, workers: Optional[int] = None) -> np.ndarray:
    return observed_voxels(sensor_sequence(scene), scene.config.grid, scene.config.target, workers=workers)


def run_pipeline_and_score(
    scene: SyntheticScene,
    strategy: str = Strategy.MAJORITY.value,
    scope: Optional[VocabScope] = None,
    maps=None,
    mask: Optional[np.ndarray] = None,
    workers: Optional[int] = None,
) -> MetricReport:
    """Label transfer -> aggregation -> voxelization, scored against the target-frame oracle grid."""
    if scene.vocab is None:
        raise ValueError("Scene has no labeled primitives to score")
    cfg = scene.config
    classes = scene_classes()
    mask = observation_mask(scene, workers) if mask is None else mask
    seq = sensor_sequence(scene)
    if strategy == FEATURES:
        merged = merge_sequence_vocab(scene.frame_vocabs)
        feats = {k: scene.features[k] for k in range(cfg.frames)}
        grid = run_feature_pipeline(seq, feats, scene.embeddings.subset(merged), cfg.grid, cfg.target, workers=workers)
        pred = to_class_grid(grid, merged, classes)
    else:
        maps = segment_scene(scene, scope) if maps is None else maps
        result = run_pipeline(seq, maps, cfg.grid, Strategy(strategy), cfg.target, workers=workers)
        pred = to_class_grid(result.grid, result.vocab, classes)
    gt = to_class_grid(scene.gt_grids[cfg.target], scene.vocab, classes)
    tag = strategy if scope is None else f"{strategy}/{VocabScope(scope).value}"
    return score(pred, gt, classes, mask=mask, workers=workers).with_tag(tag)


def run_settings(
    scene: SyntheticScene, keys: Sequence[str] = tuple(SETTING_BY_KEY), workers: Optional[int] = None
) -> Dict[str, MetricReport]:
    mask = observation_mask(scene, workers)
    maps = {}
    out = {}
    for key in keys:
        s = SETTING_BY_KEY[key]
        if s.strategy != FEATURES and s.scope not in maps:
            maps[s.scope] = segment_scene(scene, s.scope)
        out[key] = run_pipeline_and_score(
            scene, s.strategy, s.scope, maps.get(s.scope), mask, workers
        ).with_tag(f"{s.key}: {s.name}")
    return out


class Comparison(NamedTuple):
    better: str
    worse: str
    wins: int
    losses: int
    ties: int
    p_value: float


class AblationResult(NamedTuple):
    seeds: List[int]
    miou: Dict[str, np.ndarray]
    comparisons: List[Comparison]

    def mean(self, key: str) -> float:
        return float(np.nanmean(self.miou[key]))


def sign_test(better: str, worse: str, a: np.ndarray, b: np.ndarray) -> Comparison:
    """One-sided sign test that setting `better` beats `worse` per seed."""
    wins = int(np.sum(a > b))
    losses = int(np.sum(a < b))
    ties = int(a.size - wins - losses)
    n = wins + losses
    p = binomtest(wins, n, 0.5, alternative="greater").pvalue if n else 1.0
    return Comparison(better, worse, wins, losses, ties, float(p))


def run_ablation(
    seeds: Iterable[int],
    make_config: Callable[[int], SceneConfig],
    keys: Sequence[str] = tuple(SETTING_BY_KEY),
    workers: Optional[int] = None,
    progress: bool = True,
) -> AblationResult:
    seeds = list(seeds)
    miou: Dict[str, List[float]] = {k: [] for k in keys}
    for seed in tqdm(seeds, desc="ablation", unit="seed", disable=None if progress else True):
        scene = generate(make_config(seed), workers)
        reports = run_settings(scene, keys, workers)
        for k in keys:
            miou[k].append(reports[k].miou)
        logger.debug("seed %d: %s", seed, {k: round(reports[k].miou, 4) for k in keys})
    arrays = {k: np.asarray(v) for k, v in miou.items()}
    comparisons = [sign_test(b, w, arrays[b], arrays[w]) for b, w in COMPARISONS if b in arrays and w in arrays]
    return AblationResult(seeds, arrays, comparisons)


def format_ablation(result: AblationResult) -> str:
    lines = [f"Pipeline ablation over {len(result.seeds)} seeds", f"{'setting':<28}  {'mean mIoU':>9}"]
    for key in result.miou:
        s = SETTING_BY_KEY[key]
        lines.append(f"{s.key + ': ' + s.name:<28}  {result.mean(key):9.4f}")
    for c in result.comparisons:
        verdict = ">" if result.mean(c.better) > result.mean(c.worse) else "not >"
        lines.append(
            f"{c.better} {verdict} {c.worse}: wins {c.wins}, losses {c.losses}, ties {c.ties}, "
            f"sign-test p = {c.p_value:.3g}"
        )
    order = [k for k in ("c", "d", "e") if k in result.miou]
    if len(order) == 3:
        ranked = sorted(order, key=result.mean, reverse=True)
        names = {"c": "majority", "d": "nearest", "e": "modelview"}
        lines.append("ordering: " + " > ".join(names[k] for k in ranked))
    return "\n".join(lines)
