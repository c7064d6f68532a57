"""
Config file tests: scene configs, sequence directories written from synthetic
scenes, and fail-fast validation.
"""

import json
import logging
import struct
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

import numpy as np
import pytest

from artifacts.config import (
    ConfigError,
    load_overrides,
    load_scene_config,
    load_sequence,
    make_pipeline_config,
    read_ground_truth,
    read_sequence,
    save_scene_config,
    scene_config_from_dict,
    scene_config_to_dict,
    write_scene,
)
from artifacts.formats import write_grid, write_map
from semocc.pixels import FeatureMap, SegmentationMap
from semocc.reconstruction import FREE, Strategy, VoxelGrid, make_grid_spec
from semocc.vocab import VocabScope
from synthetic.scene import generate, random_scene_config

DEMO = ROOT / "data" / "demo"


@pytest.fixture(scope="module")
def scene():
    return generate(random_scene_config(1, frames=2, feature_noise=0.0))


@pytest.fixture
def sequence_dir(tmp_path, scene):
    write_scene(scene, tmp_path)
    return tmp_path


def _edit(path: Path, change) -> None:
    doc = json.loads(path.read_text(encoding="utf-8"))
    change(doc)
    path.write_text(json.dumps(doc), encoding="utf-8")


def test_scene_config_dict_round_trip():
    cfg = random_scene_config(5, frames=3, label_noise=0.1, vocab_keep=0.6, lidar_noise=0.02)
    assert scene_config_from_dict(scene_config_to_dict(cfg)) == cfg


def test_scene_config_file_round_trip(tmp_path):
    cfg = random_scene_config(2, frames=2)
    save_scene_config(tmp_path / "scene.json", cfg)
    assert load_scene_config(tmp_path / "scene.json") == cfg


def test_demo_configs_load():
    noiseless = load_scene_config(DEMO / "noiseless.json")
    assert noiseless.frames == 3 and len(noiseless.cameras) == 2
    assert noiseless.label_noise == 0.0 and noiseless.feature_noise == 0.0
    assert sum(p.is_moving for p in noiseless.primitives) == 1
    noisy = load_scene_config(DEMO / "noisy.json", seed=11)
    assert noisy.seed == 11
    assert noisy.label_noise == 0.2 and noisy.vocab_keep == 0.6


def test_random_layout_rejects_fixed_keys():
    with pytest.raises(ConfigError, match="random layout fixes"):
        scene_config_from_dict({"layout": "random", "frames": 2, "grid": {}})


def test_explicit_layout_needs_lidar():
    d = scene_config_to_dict(random_scene_config(0, frames=1))
    del d["lidar"]
    with pytest.raises(ConfigError, match="missing field 'lidar'"):
        scene_config_from_dict(d)


def test_unknown_scope_and_layout():
    with pytest.raises(ConfigError, match="vocab.scope"):
        scene_config_from_dict({"layout": "random", "frames": 2, "vocab": {"scope": "weekly"}})
    with pytest.raises(ConfigError, match="layout"):
        scene_config_from_dict({"layout": "spiral", "frames": 2})


def test_invalid_json_reports_position(tmp_path):
    (tmp_path / "bad.json").write_text('{"frames": 2,\n  "seed": }', encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid JSON at line 2"):
        load_scene_config(tmp_path / "bad.json")


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="file not found"):
        load_scene_config(tmp_path / "nope.json")


def test_written_sequence_reads_back(sequence_dir, scene):
    data = read_sequence(load_sequence(sequence_dir / "sequence.json"))
    cfg = scene.config
    assert data.features is None
    assert len(data.sequence.clouds) == cfg.frames
    assert data.config.target_frame == cfg.target
    for k in range(cfg.frames):
        assert np.array_equal(data.sequence.clouds[k].points, scene.clouds[k].points.astype(np.float32))
        for got, want in zip(data.maps[k], scene.seg_maps[k]):
            assert np.array_equal(got.data, want.data)
            assert got.vocab.labels == want.vocab.labels
        assert np.allclose(data.sequence.poses[k].world_from_ego.translation, scene.poses[k].world_from_ego.translation)
    assert [b.track_id for b in data.sequence.boxes] == [b.track_id for b in scene.boxes]
    for got, want in zip(data.config.rig, scene.rig):
        assert np.array_equal(got.intrinsics, want.intrinsics)
    gt = read_ground_truth(data.config)
    assert np.array_equal(gt.labels, scene.gt_grids[cfg.target].labels)
    assert gt.vocab.labels == scene.vocab.labels


def test_feature_sequence_classifies_like_the_scene(tmp_path, scene):
    write_scene(scene, tmp_path, features=True)
    data = read_sequence(load_sequence(tmp_path / "sequence.json"))
    assert data.maps is None
    assert isinstance(data.features[0][0], FeatureMap)
    maps = data.segmentation(VocabScope.SEQUENCE)
    for k in range(scene.config.frames):
        for got, want in zip(maps[k], scene.seg_maps[k]):
            assert np.array_equal(got.data, want.data)


def test_missing_referenced_file(sequence_dir):
    path = sequence_dir / "sequence.json"
    _edit(path, lambda d: d["frames"][0].__setitem__("cloud", "frames/missing.lpc"))
    with pytest.raises(ConfigError, match="frames\\[0\\].cloud: file not found"):
        load_sequence(path)


def test_map_count_must_match_rig(sequence_dir):
    path = sequence_dir / "sequence.json"
    _edit(path, lambda d: d["frames"][1]["maps"].pop())
    with pytest.raises(ConfigError, match="1 maps for 2 cameras"):
        load_sequence(path)


def test_target_frame_must_exist(sequence_dir):
    path = sequence_dir / "sequence.json"
    _edit(path, lambda d: d.__setitem__("target_frame", 9))
    with pytest.raises(ConfigError, match="frame 9 is not in the sequence"):
        load_sequence(path)


def test_camera_must_be_rigid(sequence_dir):
    path = sequence_dir / "sequence.json"

    def skew(d):
        d["cameras"][0]["cam_from_ego"][0][1] += 0.5
    _edit(path, skew)
    with pytest.raises(ConfigError, match="cameras\\[0\\]"):
        load_sequence(path)


def test_map_size_checked_against_camera(sequence_dir, scene):
    cfg = load_sequence(sequence_dir / "sequence.json")
    write_map(cfg.frames[0].maps[0], SegmentationMap(np.zeros((3, 4))))
    with pytest.raises(ConfigError, match="map is 4x3"):
        read_sequence(cfg)


def test_mixed_map_kinds_rejected(sequence_dir):
    cfg = load_sequence(sequence_dir / "sequence.json")
    cam = cfg.rig[0]
    write_map(cfg.frames[0].maps[0], FeatureMap(np.ones((cam.height, cam.width, 16))))
    with pytest.raises(ConfigError, match="mixes label maps and feature maps"):
        read_sequence(cfg)


def test_pipeline_config_validation(sequence_dir):
    seq = sequence_dir / "sequence.json"
    cfg = make_pipeline_config(seq, sequence_dir / "out.lvx", "nearest", "per-frame", workers=2)
    assert cfg.strategy == Strategy.NEAREST and cfg.scope == VocabScope.FRAME
    with pytest.raises(ConfigError, match="strategy"):
        make_pipeline_config(seq, sequence_dir / "out.lvx", "median")
    with pytest.raises(ConfigError, match="scope"):
        make_pipeline_config(seq, sequence_dir / "out.lvx", scope="dataset")
    with pytest.raises(ConfigError, match="Worker count"):
        make_pipeline_config(seq, sequence_dir / "out.lvx", workers=0)


def test_overrides(tmp_path):
    (tmp_path / "o.json").write_text(json.dumps({"sedan": "car"}), encoding="utf-8")
    assert load_overrides(tmp_path / "o.json") == {"sedan": "car"}
    (tmp_path / "o.json").write_text(json.dumps({"sedan": 3}), encoding="utf-8")
    with pytest.raises(ConfigError, match="sedan"):
        load_overrides(tmp_path / "o.json")


def test_map_headers_checked_before_payloads(sequence_dir):
    cfg = load_sequence(sequence_dir / "sequence.json")
    # header says 4x3, payload cut short: the size mismatch is reported first
    cfg.frames[1].maps[0].write_bytes(b"LSG1" + struct.pack("<III", 3, 4, 1) + b"\x00\x00")
    with pytest.raises(ConfigError, match="map is 4x3"):
        read_sequence(cfg)


def test_label_maps_log_that_scope_does_not_apply(sequence_dir, caplog):
    data = read_sequence(load_sequence(sequence_dir / "sequence.json"))
    with caplog.at_level(logging.INFO, logger="artifacts.config"):
        maps = data.segmentation(VocabScope.FRAME)
    assert maps is data.maps
    assert "scope per-frame does not apply" in caplog.text


def test_empty_scene_reads_back(tmp_path):
    scene = generate(random_scene_config(0, frames=2)._replace(primitives=()))
    write_scene(scene, tmp_path)
    data = read_sequence(load_sequence(tmp_path / "sequence.json"))
    assert sorted(data.vocabs) == [0, 1]
    assert all(len(v) == 0 for v in data.vocabs.values())
    assert all(len(c) == 0 for c in data.sequence.clouds)
    assert not read_ground_truth(data.config).occupied.any()


def test_ground_truth_grid_must_match_sequence(sequence_dir):
    cfg = load_sequence(sequence_dir / "sequence.json")
    other = make_grid_spec((0.0, 0.0, 0.0), 0.5, (2, 2, 2))
    write_grid(cfg.ground_truth, VoxelGrid(other, np.full(other.dims, FREE)))
    with pytest.raises(ConfigError, match="does not match the sequence grid"):
        read_ground_truth(cfg)
