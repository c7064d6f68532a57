"""
Command-line tests: subcommands end to end on the shipped demo scene, exit
codes, and worker-count independence of the written grid.
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

import numpy as np
import pytest

import cli
from artifacts.formats import read_grid, read_points, write_grid
from semocc.reconstruction import FREE, VoxelGrid, make_grid_spec
from semocc.vocab import VocabScope, VocabularySet

NOISELESS = str(ROOT / "data" / "demo" / "noiseless.json")


def _small_gt(path: Path) -> None:
    spec = make_grid_spec((0.0, 0.0, 0.0), 0.4, (4, 4, 2))
    labels = np.full(spec.dims, FREE)
    labels[:, :, 0] = 1
    labels[1:3, 1:3, 1] = 0
    write_grid(path, VoxelGrid(spec, labels, VocabularySet(["car", "driveable_surface"], scope=VocabScope.DATASET)))


@pytest.fixture(scope="module")
def sequence_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("seq")
    assert cli.main(["gen", "--config", NOISELESS, "--out", str(out)]) == 0
    return out


def test_eval_identical_grids(tmp_path, capsys):
    _small_gt(tmp_path / "gt.lvx")
    code = cli.main(["eval", "--pred", str(tmp_path / "gt.lvx"), "--gt", str(tmp_path / "gt.lvx")])
    assert code == 0
    out = capsys.readouterr().out
    assert "mIoU: 1.0000" in out
    assert "occupancy IoU: 1.0000" in out


def test_eval_writes_report(tmp_path):
    _small_gt(tmp_path / "gt.lvx")
    report = tmp_path / "r" / "report.json"
    assert cli.main(["eval", "--pred", str(tmp_path / "gt.lvx"), "--gt", str(tmp_path / "gt.lvx"),
                     "--report", str(report)]) == 0
    data = json.loads(report.read_text(encoding="utf-8"))
    assert data["miou"] == 1.0
    assert data["per_class_iou"]["car"] == 1.0
    assert data["per_class_iou"]["bus"] is None


def test_usage_errors_exit_1(capsys):
    assert cli.main(["eval", "--pred", "x.lvx", "--bogus"]) == 1
    assert cli.main(["frobnicate"]) == 1
    assert cli.main(["pipeline", "--scene", NOISELESS, "--out", "x.lvx", "--workers", "0"]) == 1
    err = capsys.readouterr().err
    assert "--workers must be >= 1" in err


def test_missing_and_malformed_files_exit_1(tmp_path, capsys):
    assert cli.main(["eval", "--pred", str(tmp_path / "none.lvx"), "--gt", str(tmp_path / "none.lvx")]) == 1
    _small_gt(tmp_path / "gt.lvx")
    data = (tmp_path / "gt.lvx").read_bytes()
    (tmp_path / "cut.lvx").write_bytes(data[:-2])
    assert cli.main(["eval", "--pred", str(tmp_path / "cut.lvx"), "--gt", str(tmp_path / "gt.lvx")]) == 1
    err = capsys.readouterr().err
    assert "cut.lvx" in err and f"expected {len(data)} bytes, got {len(data) - 2}" in err


def test_processing_error_exits_2(tmp_path, capsys):
    _small_gt(tmp_path / "gt.lvx")
    other = make_grid_spec((0.0, 0.0, 0.0), 0.4, (2, 2, 2))
    write_grid(tmp_path / "pred.lvx", VoxelGrid(other, np.full(other.dims, FREE)))
    assert cli.main(["eval", "--pred", str(tmp_path / "pred.lvx"), "--gt", str(tmp_path / "gt.lvx")]) == 2
    assert "error: Grid specs differ" in capsys.readouterr().err


def test_noiseless_demo_pipeline(tmp_path, capsys):
    report = tmp_path / "report.json"
    code = cli.main(["pipeline", "--scene", NOISELESS, "--out", str(tmp_path / "grid.lvx"), "--report", str(report)])
    assert code == 0
    assert json.loads(report.read_text(encoding="utf-8"))["miou"] >= 0.95
    assert "mIoU:" in capsys.readouterr().out


def test_pipeline_output_independent_of_workers(tmp_path):
    outputs = []
    for i, workers in enumerate((1, 2, 8, 1)):
        out = tmp_path / f"grid{i}.lvx"
        assert cli.main(["pipeline", "--scene", NOISELESS, "--out", str(out), "--workers", str(workers)]) == 0
        outputs.append(out.read_bytes())
    assert all(o == outputs[0] for o in outputs[1:])


def test_sequence_pipeline_independent_of_workers(sequence_dir, tmp_path):
    seq = str(sequence_dir / "sequence.json")
    outputs = []
    for workers in (1, 2, 8):
        out = tmp_path / f"grid{workers}.lvx"
        assert cli.main(["pipeline", "--sequence", seq, "--out", str(out), "--workers", str(workers)]) == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_stepwise_commands(sequence_dir, tmp_path, capsys):
    seq = str(sequence_dir / "sequence.json")
    assert cli.main(["label", "--sequence", seq, "--out", str(tmp_path / "labeled")]) == 0
    cloud = read_points(tmp_path / "labeled" / "000.lpc")
    assert cloud.labels is not None and len(cloud) > 0

    agg = tmp_path / "agg.lpc"
    assert cli.main(["reconstruct", "--sequence", seq, "--out", str(agg)]) == 0
    for strategy in ("majority", "nearest", "modelview"):
        out = tmp_path / f"{strategy}.lvx"
        code = cli.main(["voxelize", "--aggregate", str(agg), "--sequence", seq, "--strategy", strategy,
                         "--out", str(out)])
        assert code == 0
        assert read_grid(out).occupied.any()
    capsys.readouterr()
    code = cli.main(["eval", "--pred", str(tmp_path / "majority.lvx"), "--gt", str(sequence_dir / "gt.lvx")])
    assert code == 0
    assert "mIoU:" in capsys.readouterr().out


def test_autoencoder_commands(tmp_path, capsys):
    ckpt = tmp_path / "ae.lae"
    code = cli.main(["ae-train", "--random", "40", "--dim", "16", "--hidden", "8", "--latent", "4",
                     "--epochs", "5", "--batch-size", "8", "--seed", "3", "--out", str(ckpt)])
    assert code == 0
    assert "16 -> 8 -> 4" in capsys.readouterr().out
    code = cli.main(["ae-encode", "--checkpoint", str(ckpt), "--embeddings", str(ROOT / "missing.lem"),
                     "--out", str(tmp_path / "z.lem")])
    assert code == 1


def test_ablate_rejects_unknown_settings(capsys):
    assert cli.main(["ablate", "--settings", "cx", "--seeds", "1"]) == 1


def test_bench_writes_csv(tmp_path, capsys):
    csv_path = tmp_path / "bench.csv"
    assert cli.main(["bench", "--counts", "300,900", "--csv", str(csv_path), "--seed", "1"]) == 0
    rows = csv_path.read_text(encoding="utf-8").splitlines()
    assert rows[0].startswith("num_points,frames,workers,label_sec")
    assert len(rows) == 3
    assert "Label transfer" in capsys.readouterr().out
