#!/usr/bin/env python3
"""
CLI for semantic transitive labeling: image labels -> LiDAR points -> voxels.

Commands:
  gen           Generate a synthetic scene and write it as a sequence directory
  label         Transfer image labels onto every frame's LiDAR points
  reconstruct   Label and aggregate a sequence into one target-frame cloud
  voxelize      Voxelize an aggregate (majority | nearest | modelview)
  eval          Score a predicted grid against a ground-truth grid
  ae-train      Train the language autoencoder on an embedding file
  ae-encode     Compress an embedding file with a trained autoencoder
  pipeline      End to end: sequence (or scene config) -> labeled grid (+ report)
  ablate        Run the pipeline settings over many seeds and compare them
  bench         Time label transfer and voxelization at growing point counts

Exit codes: 0 success, 1 validation error, 2 processing error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

# Add project root to path
sys.path.insert(0, str(Path(__file__).resolve().parent))

from artifacts import (
    ConfigError,
    FormatError,
    load_overrides,
    load_scene_config,
    load_sequence,
    make_pipeline_config,
    read_aggregate,
    read_autoencoder,
    read_embeddings,
    read_ground_truth,
    read_grid,
    read_sequence,
    read_vocab,
    vocab_sidecar,
    write_aggregate,
    write_autoencoder,
    write_embeddings,
    write_grid,
    write_points,
    write_scene,
    write_vocab,
)
from semocc import (
    ClassSet,
    EmbeddingMatrix,
    Strategy,
    Subset,
    UNLABELED,
    VocabScope,
    aggregate,
    apply_label_map,
    canonical_map,
    format_report,
    label_and_merge,
    latent_embeddings,
    modelview_grid,
    observed_voxels,
    report_to_dict,
    run_pipeline,
    score,
    to_class_grid,
    voxelize,
)
from semocc import config
from semocc.autoencoder import TrainConfig, latent_identity_rate, low_rank_unit_embeddings, train
from semocc.reconstruction import VoxelGrid
from benchmark import run_benchmark
from synthetic import format_ablation, generate, run_ablation, segment_scene, sensor_sequence
from synthetic.harness import SETTING_BY_KEY

logger = logging.getLogger("semocc.cli")

DEMO_NOISELESS = config.DEMO_DIR / "noiseless.json"
DEMO_NOISY = config.DEMO_DIR / "noisy.json"
SCOPES = (VocabScope.FRAME.value, VocabScope.SEQUENCE.value)


class UsageError(Exception):
    """Bad command line; argparse has already printed the usage line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _configure_logging(verbose: int) -> None:
    level = {0: config.LOG_LEVEL, 1: "INFO"}.get(verbose, "DEBUG")
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")


def _seed(args: argparse.Namespace) -> int:
    return config.DEFAULT_SEED if args.seed is None else args.seed


def _save_report(path: Optional[str], data: dict) -> None:
    if path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
        print("Report written to", p)


def cmd_gen(args: argparse.Namespace) -> None:
    cfg = load_scene_config(args.config, seed=args.seed)
    scene = generate(cfg, args.workers)
    scope = None if args.scope is None else VocabScope(args.scope)
    out = write_scene(scene, args.out, scope=scope, features=args.features)
    print(f"Scene: {cfg.frames} frames, {len(cfg.cameras)} cameras, {sum(len(c) for c in scene.clouds)} LiDAR returns")
    print("Sequence written to", out)


def cmd_label(args: argparse.Namespace) -> None:
    data = read_sequence(load_sequence(args.sequence))
    labeled, vocab = label_and_merge(data.sequence, data.segmentation(VocabScope(args.scope)), args.workers)
    out = Path(args.out)
    for cloud in labeled:
        write_points(out / f"{cloud.frame_index:03d}.lpc", cloud)
        n_seen = int((cloud.labels != UNLABELED).sum())
        print(f"frame {cloud.frame_index}: {n_seen}/{len(cloud)} points labeled")
    write_vocab(out / "vocab.txt", vocab)
    print("Labeled clouds written to", out)


def cmd_reconstruct(args: argparse.Namespace) -> None:
    seq_cfg = load_sequence(args.sequence)
    data = read_sequence(seq_cfg)
    labeled, vocab = label_and_merge(data.sequence, data.segmentation(VocabScope(args.scope)), args.workers)
    target = _target(args.target, seq_cfg)
    window = seq_cfg.window if args.window is None else args.window
    agg = aggregate(labeled, data.sequence.poses, data.sequence.boxes, target, window=window, workers=args.workers)
    write_aggregate(args.out, agg)
    write_vocab(vocab_sidecar(args.out), vocab)
    print(f"Aggregated {len(agg)} points into frame {target}; written to {args.out}")


def _target(arg: Optional[int], seq_cfg) -> int:
    if arg is not None:
        return arg
    if seq_cfg.target_frame is not None:
        return seq_cfg.target_frame
    return max(f.index for f in seq_cfg.frames)


def cmd_voxelize(args: argparse.Namespace) -> None:
    sidecar = vocab_sidecar(args.aggregate)
    vocab = read_vocab(sidecar, VocabScope.SEQUENCE) if sidecar.exists() else None
    agg = read_aggregate(args.aggregate, vocab)
    seq_cfg = load_sequence(args.sequence)
    strategy = Strategy(args.strategy)
    if strategy == Strategy.MODELVIEW:
        if vocab is None:
            raise ConfigError(f"{sidecar}: model-view projection needs the aggregate's vocabulary")
        data = read_sequence(seq_cfg)
        maps = data.segmentation(VocabScope(args.scope))
        if agg.target_frame not in maps:
            raise ConfigError(f"{args.sequence}: no maps for target frame {agg.target_frame}")
        grid = modelview_grid(agg, seq_cfg.grid, seq_cfg.rig, maps[agg.target_frame], vocab, args.workers)
    else:
        grid = voxelize(agg, seq_cfg.grid, strategy, args.workers)
    write_grid(args.out, grid)
    print(f"{strategy.value}: {int(grid.occupied.sum())} occupied voxels; written to {args.out}")


def _classes(args: argparse.Namespace) -> ClassSet:
    classes = ClassSet()
    if args.base:
        classes = classes.with_base([n.strip() for n in args.base.split(",") if n.strip()])
    return classes


def _as_classes(grid: VoxelGrid, classes: ClassSet, args: argparse.Namespace, what: str, open_vocab: bool) -> VoxelGrid:
    """Class-index grid: by text, or through embeddings when label and class texts differ."""
    if grid.vocab is None:
        return grid
    if open_vocab and args.embeddings and args.class_embeddings:
        emb = read_embeddings(args.embeddings)
        class_emb = read_embeddings(args.class_embeddings)
        overrides = load_overrides(args.overrides) if args.overrides else None
        mapping = canonical_map(grid.vocab, emb, classes, class_emb, overrides)
        return apply_label_map(grid, mapping, classes)
    unknown = [x for x in grid.vocab.labels if x not in classes.semantic_names]
    if unknown:
        logger.warning("%s labels outside the class set count as unlabeled: %s", what, unknown)
    return to_class_grid(grid, grid.vocab, classes)


def cmd_eval(args: argparse.Namespace) -> None:
    classes = _classes(args)
    pred = _as_classes(read_grid(args.pred), classes, args, "predicted", open_vocab=True)
    gt = _as_classes(read_grid(args.gt, VocabScope.DATASET), classes, args, "ground-truth", open_vocab=False)
    report = score(
        pred, gt, classes, Subset(args.subset), absent_as_zero=args.absent_as_zero, workers=args.workers
    ).with_tag(Path(args.pred).name)
    print(format_report(report))
    _save_report(args.report, report_to_dict(report))


def cmd_ae_train(args: argparse.Namespace) -> None:
    seed = _seed(args)
    if args.embeddings:
        emb = read_embeddings(args.embeddings)
    else:
        emb = EmbeddingMatrix(low_rank_unit_embeddings(args.random, args.dim, seed=seed))
    hidden = [int(x) for x in args.hidden.split(",") if x.strip()]
    arch = (emb.dim, *hidden, args.latent)
    cfg = TrainConfig(args.epochs, args.lr, args.batch_size, seed, args.holdout, args.lr_growth)
    params, report = train(emb, cfg, arch)
    write_autoencoder(args.out, params)
    last = report.epochs[-1]
    accepted = sum(r.accepted for r in report.epochs)
    print(f"Architecture: {' -> '.join(str(d) for d in arch)}")
    print(f"Loss: {report.initial_loss:.6f} -> {last.train_loss:.6f} ({accepted}/{len(report.epochs)} epochs kept)")
    print(f"Holdout loss: {last.holdout_loss:.6f}")
    print("Checkpoint written to", args.out)


def cmd_ae_encode(args: argparse.Namespace) -> None:
    params = read_autoencoder(args.checkpoint)
    emb = read_embeddings(args.embeddings)
    latent = latent_embeddings(params, emb)
    write_embeddings(args.out, latent)
    print(f"Encoded {len(emb)} embeddings {emb.dim} -> {latent.dim}")
    print(f"Latent nearest-neighbor identity: {latent_identity_rate(params, emb):.4f}")
    print("Latent embeddings written to", args.out)


def cmd_pipeline(args: argparse.Namespace) -> None:
    scope = VocabScope(args.scope)
    if args.scene:
        cfg = load_scene_config(args.scene, seed=args.seed)
        scene = generate(cfg, args.workers)
        seq = sensor_sequence(scene)
        maps = segment_scene(scene, scope)
        grid_spec, window = cfg.grid, args.window
        target = cfg.target if args.target is None else args.target
        gt = scene.gt_grids[target] if scene.vocab is not None else None
    else:
        pcfg = make_pipeline_config(args.sequence, args.out, args.strategy, args.scope, args.report, args.workers)
        data = read_sequence(pcfg.sequence)
        gt = read_ground_truth(pcfg.sequence)
        seq = data.sequence
        maps = data.segmentation(pcfg.scope)
        grid_spec = pcfg.sequence.grid
        target = _target(args.target, pcfg.sequence)
        window = pcfg.sequence.window if args.window is None else args.window
    result = run_pipeline(seq, maps, grid_spec, Strategy(args.strategy), target, window, args.workers)
    write_grid(args.out, result.grid)
    print(f"{args.strategy}: {int(result.grid.occupied.sum())} occupied voxels; written to {args.out}")
    if gt is None:
        return
    classes = ClassSet()
    mask = observed_voxels(seq, grid_spec, target, window, args.workers)
    report = score(
        to_class_grid(result.grid, result.vocab, classes),
        to_class_grid(gt, gt.vocab, classes),
        classes,
        mask=mask,
        workers=args.workers,
    ).with_tag(f"{args.strategy}/{scope.value}")
    print(format_report(report))
    _save_report(args.report, report_to_dict(report))


def cmd_ablate(args: argparse.Namespace) -> None:
    keys = [k for k in args.settings if k in SETTING_BY_KEY]
    if len(keys) != len(args.settings):
        raise UsageError(f"Unknown settings in {args.settings!r}; choose from {''.join(SETTING_BY_KEY)}")
    start = _seed(args)
    seeds = range(start, start + args.seeds)
    result = run_ablation(
        seeds, lambda s: load_scene_config(args.config, seed=s), keys, args.workers, progress=True
    )
    print(format_ablation(result))
    _save_report(
        args.report,
        {
            "seeds": list(result.seeds),
            "miou": {k: [None if v != v else float(v) for v in result.miou[k]] for k in keys},
            "mean_miou": {k: result.mean(k) for k in keys},
            "comparisons": [c._asdict() for c in result.comparisons],
        },
    )


def cmd_bench(args: argparse.Namespace) -> None:
    counts = tuple(int(x) for x in args.counts.split(",") if x.strip())
    out = run_benchmark(counts, workers=args.workers, seed=_seed(args), csv_path=Path(args.csv) if args.csv else None)
    for row in out["benchmark_results"]:
        if row.get("error"):
            print(f"N={row['num_points']}: error: {row['error']}", file=sys.stderr)
            continue
        print(
            f"N={row['num_points']:>8}  label {row['label_sec']:.3f}s  aggregate {row['aggregate_sec']:.3f}s  "
            f"majority {row['majority_sec']:.3f}s  nearest {row['nearest_sec']:.3f}s  "
            f"modelview {row['modelview_sec']:.3f}s"
        )
    print(out["scaling_analysis"]["summary"])
    if args.csv:
        print("Results written to", args.csv)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug (stderr)")
    common.add_argument(
        "--workers", type=int, default=config.DEFAULT_WORKERS,
        help="Worker threads (default SEMOCC_WORKERS or 1); output does not depend on it",
    )
    seeded = _Parser(add_help=False)
    seeded.add_argument("--seed", type=int, default=None, help="Master seed (default SEMOCC_SEED or the config's)")

    parser = _Parser(description="Semantic transitive labeling: image labels -> LiDAR points -> voxels")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common, seeded], help="Generate a synthetic scene")
    p.add_argument("--config", default=str(DEMO_NOISELESS), help="Scene config JSON")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--scope", choices=SCOPES, default=None, help="Vocabulary scope of the written label maps")
    p.add_argument("--features", action="store_true", help="Write per-pixel feature maps instead of label maps")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("label", parents=[common], help="Label every frame's points")
    p.add_argument("--sequence", required=True, help="Sequence JSON")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--scope", choices=SCOPES, default=VocabScope.SEQUENCE.value)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("reconstruct", parents=[common], help="Label and aggregate a sequence")
    p.add_argument("--sequence", required=True)
    p.add_argument("--out", required=True, help="Aggregate file (LPC1)")
    p.add_argument("--scope", choices=SCOPES, default=VocabScope.SEQUENCE.value)
    p.add_argument("--target", type=int, default=None, help="Target frame (default: sequence's, else last)")
    p.add_argument("--window", type=int, default=None, help="Keep frames within this distance of the target")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("voxelize", parents=[common], help="Voxelize an aggregate")
    p.add_argument("--aggregate", required=True, help="Aggregate file from 'reconstruct'")
    p.add_argument("--sequence", required=True, help="Sequence JSON (grid; rig and maps for modelview)")
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.MAJORITY.value)
    p.add_argument("--scope", choices=SCOPES, default=VocabScope.SEQUENCE.value)
    p.add_argument("--out", required=True, help="Voxel grid file (LVX1)")
    p.set_defaults(func=cmd_voxelize)

    p = sub.add_parser("eval", parents=[common], help="Score a predicted grid")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--subset", choices=[s.value for s in Subset], default=Subset.ALL.value)
    p.add_argument("--base", default=None, help="Comma-separated base classes (enables base/novel subsets)")
    p.add_argument("--embeddings", default=None, help="Label embeddings for open-vocabulary mapping")
    p.add_argument("--class-embeddings", default=None, help="Class-name embeddings for open-vocabulary mapping")
    p.add_argument("--overrides", default=None, help="JSON label -> class overrides")
    p.add_argument("--absent-as-zero", action="store_true", help="Classes absent from both grids count as IoU 0")
    p.add_argument("--report", default=None, help="JSON report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ae-train", parents=[common, seeded], help="Train the language autoencoder")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--embeddings", help="Embedding file (LEM1)")
    src.add_argument("--random", type=int, help="Train on this many seeded random unit embeddings")
    p.add_argument("--dim", type=int, default=512, help="Dimension of --random embeddings")
    p.add_argument("--hidden", default="256", help="Comma-separated hidden widths")
    p.add_argument("--latent", type=int, default=128)
    p.add_argument("--epochs", type=int, default=TrainConfig().epochs)
    p.add_argument("--lr", type=float, default=TrainConfig().learning_rate)
    p.add_argument("--batch-size", type=int, default=TrainConfig().batch_size)
    p.add_argument("--holdout", type=float, default=TrainConfig().holdout_fraction)
    p.add_argument("--lr-growth", type=float, default=TrainConfig().lr_growth)
    p.add_argument("--out", required=True, help="Checkpoint file (LAE1)")
    p.set_defaults(func=cmd_ae_train)

    p = sub.add_parser("ae-encode", parents=[common], help="Encode embeddings into the latent space")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True, help="Latent embedding file (LEM1)")
    p.set_defaults(func=cmd_ae_encode)

    p = sub.add_parser("pipeline", parents=[common, seeded], help="End-to-end labeled grid")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--sequence", help="Sequence JSON")
    src.add_argument("--scene", help="Scene config JSON, generated in memory")
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.MAJORITY.value)
    p.add_argument("--scope", choices=SCOPES, default=VocabScope.SEQUENCE.value)
    p.add_argument("--target", type=int, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--out", required=True, help="Voxel grid file (LVX1)")
    p.add_argument("--report", default=None, help="JSON report path (when ground truth is available)")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("ablate", parents=[common, seeded], help="Compare pipeline settings over seeds")
    p.add_argument("--config", default=str(DEMO_NOISY), help="Scene config JSON (random layout)")
    p.add_argument("--seeds", type=int, default=50, help="Number of seeds, starting at --seed")
    p.add_argument("--settings", default="bcde", help="Setting keys: a features, b frame vocab, c sequence "
                   "vocab, d nearest, e modelview")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench", parents=[common, seeded], help="Runtime benchmark")
    p.add_argument("--counts", default="10000,100000,500000", help="Comma-separated point counts")
    p.add_argument("--csv", default=None, help="CSV output path")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.workers < 1:
            parser.error(f"--workers must be >= 1, got {args.workers}")
        _configure_logging(args.verbose)
        args.func(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except (FormatError, ConfigError, FileNotFoundError) as e:
        print("error:", e, file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as e:
        print("error:", e, file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
