"""
Long-running end-to-end checks: voxelizer oracles over many seeds and the
pipeline ablation over 50 synthetic scenes.

Run with: pytest -m slow tests/test_acceptance.py
"""

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

import numpy as np
import pytest

from semocc.reconstruction import voxelize_majority, voxelize_nearest
from semocc.vocab import VocabScope
from synthetic.harness import format_ablation, run_ablation
from synthetic.scene import random_scene_config
from tests.test_reconstruction import GRID, _majority_oracle, _nearest_oracle, _random_aggregate

SEEDS = range(50)


@pytest.mark.slow
def test_voxelizers_match_oracles_on_100_clouds():
    for seed in range(100):
        agg = _random_aggregate(1000 + seed, n=2000 + 80 * seed)
        assert np.array_equal(voxelize_majority(agg, GRID).labels, _majority_oracle(agg, GRID)), seed
        assert np.array_equal(voxelize_nearest(agg, GRID).labels, _nearest_oracle(agg, GRID)), seed


@pytest.mark.slow
def test_ablation_ordering_under_label_noise():
    result = run_ablation(
        SEEDS, lambda s: random_scene_config(s, frames=5, label_noise=0.2), keys=("c", "d", "e"), progress=False
    )
    print(format_ablation(result))
    assert result.mean("c") > result.mean("d") > result.mean("e")
    for comparison in result.comparisons:
        assert comparison.p_value < 0.05, comparison


@pytest.mark.slow
def test_merged_vocabulary_not_worse_than_single_frame():
    result = run_ablation(
        SEEDS,
        lambda s: random_scene_config(s, frames=5, vocab_keep=0.6, vocab_scope=VocabScope.SEQUENCE),
        keys=("b", "c"),
        progress=False,
    )
    print(format_ablation(result))
    assert result.mean("c") >= result.mean("b")
