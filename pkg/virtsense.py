#!/usr/bin/env python3
"""
Virtual Sensor Toolkit CLI
==========================
Every stage of the pipeline as a subcommand, each reading and writing
files in one run directory (--out):

  python virtsense.py synth --sensors 60 --clusters 5 --readings 5000
  python virtsense.py pca --input dataset.csv
  python virtsense.py kmeans --input dataset.csv --clusters 5 --block-size 500
  python virtsense.py fuse --input dataset.csv --blocks runs/blocks.json
  python virtsense.py select --input dataset.csv --clustering runs/clustering.json
  python virtsense.py train --input dataset.csv --representatives runs/representatives.json --kind mlp
  python virtsense.py predict --input new.csv --model runs/model.json
  python virtsense.py --config cfg.json pipeline --input dataset.csv
  python virtsense.py --config cfg.json exp-a
  python virtsense.py --config cfg.json exp-b
"""

import argparse
import logging
import sys
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

import artifact_store as files
from artifact_store import ArtifactStore
from config import configure_logging, get_settings
from dataset import NormParams, SensorDataset, apply_norm, clean_missing, load_csv, normalize, partition_blocks
from errors import PipelineError, VirtsenseError
from fac2t import run_fac2t
from kmeans import ClusteringSolution, cluster_all_blocks
from pca import estimate_min_sensors, spectrum_of
from pipeline import PipelineConfig, run_experiment_a, run_experiment_b, run_pipeline
from regress import MODEL_KINDS, VirtualSensorModel, mse, train_virtual_sensors
from repsel import representatives_from_dict, representatives_to_json, select_representative_details
from synthgen import generate_synthetic, ground_truth_json

logger = logging.getLogger("CLI")


def print_header(text: str) -> None:
    print(f"\n{'=' * 70}")
    print(f"  {text}")
    print(f"{'=' * 70}")

# ============================================================================
# SHARED LOADING
# ============================================================================

def _load_normalized(path: str, header: bool) -> Tuple[SensorDataset, NormParams]:
    """Load, drop incomplete rows and min-max scale the whole file."""
    return normalize(clean_missing(load_csv(path, header=header)))


def _load_config(args) -> PipelineConfig:
    settings = get_settings()
    if args.config:
        cfg = PipelineConfig.from_json_file(args.config)
    else:
        cfg = PipelineConfig(workers=settings.workers)
    updates = {"seed": args.seed if args.seed is not None else (cfg.seed if args.config else settings.default_seed)}
    if getattr(args, "input", None):
        updates["input_path"] = args.input
    if getattr(args, "no_header", False):
        updates["header"] = False
    return cfg.model_copy(update=updates)

# ============================================================================
# SUBCOMMANDS
# ============================================================================

def cmd_synth(args, cfg: PipelineConfig, store: ArtifactStore) -> None:
    s = cfg.synthetic
    synth = generate_synthetic(
        args.sensors, args.clusters, args.readings, seed=cfg.seed, peak=s.peak, low=s.low, high=s.high,
    )
    store.save_dataset(files.DATASET_CSV, synth.dataset)
    store.save_json(files.GROUND_TRUTH_JSON, ground_truth_json(synth.ground_truth, synth.dataset.names))
    print_header(f"🧪 {args.sensors} sensors x {args.readings} readings, {args.clusters} planted clusters")


def cmd_pca(args, cfg: PipelineConfig, store: ArtifactStore) -> None:
    d, _ = _load_normalized(args.input, cfg.header)
    fraction = args.variance_fraction if args.variance_fraction is not None else cfg.variance_fraction
    m0 = estimate_min_sensors(d, fraction)
    spectrum = spectrum_of(d)
    cumulative = np.cumsum(spectrum.explained_variance_ratio())
    print_header(f"📐 M0 = {m0} representative sensors ({fraction:.0%} of variance, {d.n_sensors} sensors)")
    for k, (value, share) in enumerate(zip(spectrum.eigenvalues, cumulative), start=1):
        print(f"  {k:>4}  eigenvalue {value:12.6g}  cumulative {share:7.2%}")
        if share >= fraction and k >= m0:
            break


def cmd_kmeans(args, cfg: PipelineConfig, store: ArtifactStore) -> None:
    d, _ = _load_normalized(args.input, cfg.header)
    blocks = partition_blocks(d, args.block_size)
    solutions = cluster_all_blocks(
        blocks, args.clusters, seed=cfg.seed, max_iter=cfg.kmeans_max_iter, tol=cfg.kmeans_tol,
        n_init=cfg.kmeans_n_init, workers=cfg.workers,
    )
    store.save_json(files.BLOCKS_JSON, {
        "block_size": args.block_size,
        "m": args.clusters,
        "solutions": [sol.to_json_dict(d.names) for sol in solutions],
    })
    print_header(f"🔹 {blocks.n_blocks} block solutions with {args.clusters} clusters each")


def cmd_fuse(args, cfg: PipelineConfig, store: ArtifactStore) -> None:
    d, _ = _load_normalized(args.input, cfg.header)
    payload = ArtifactStore.load_json(args.blocks)
    try:
        block_size = int(payload["block_size"])
        solutions = [ClusteringSolution.from_json_dict(s, d.names) for s in payload["solutions"]]
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise PipelineError(f"malformed blocks file {args.blocks}: {e}") from None
    blocks = partition_blocks(d, block_size)
    if len(solutions) != blocks.n_blocks:
        raise PipelineError(f"{len(solutions)} block solutions for {blocks.n_blocks} blocks")
    best, history = run_fac2t(blocks, solutions, cfg.fac2t, seed=cfg.seed)
    store.save_json(files.CLUSTERING_JSON, best.to_json_dict(d.names))
    store.save_frame(files.HISTORY_CSV, history.to_frame())
    print_header(f"🐜 Fused clustering: best metric {history.best_metrics()[-1]:.6g}")


def cmd_select(args, cfg: PipelineConfig, store: ArtifactStore) -> None:
    d, _ = _load_normalized(args.input, cfg.header)
    solution = ClusteringSolution.from_json_dict(ArtifactStore.load_json(args.clustering), d.names)
    reps = select_representative_details(solution, d)
    store.save_json(files.REPRESENTATIVES_JSON, representatives_to_json(reps))
    print_header("🎯 Representatives")
    for r in reps:
        print(f"  cluster {r.label:>3}: {r.name:<20} Q = {r.quality:.6g}")


def cmd_train(args, cfg: PipelineConfig, store: ArtifactStore) -> None:
    d, norm = _load_normalized(args.input, cfg.header)
    reps = representatives_from_dict(ArtifactStore.load_json(args.representatives), d)
    model = train_virtual_sensors(args.kind, d, [r.name for r in reps], cfg.regressor, seed=cfg.seed, norm_params=norm)
    store.save_json(files.MODEL_JSON, model.to_json())
    train_mse = mse(model.predict_dataset(d), d.select(list(model.outputs)).values)
    store.save_frame(files.METRICS_CSV, pd.DataFrame(
        [{"kind": args.kind, "train_mse": train_mse, "fit_seconds": model.fit_seconds}],
    ))
    print_header(f"🧠 {args.kind}: {len(model.inputs)} -> {len(model.outputs)} sensors, train MSE {train_mse:.6g}")


def cmd_predict(args, cfg: PipelineConfig, store: ArtifactStore) -> None:
    raw = clean_missing(load_csv(args.input, header=cfg.header))
    model = VirtualSensorModel.from_dict(ArtifactStore.load_json(args.model))
    predicted = model.predict_dataset(raw, normalized=False)
    frame = pd.DataFrame({"sample": np.arange(raw.n_samples)})
    known = [n for n in model.outputs if n in raw.names]
    actual = None
    if known and len(known) == len(model.outputs) and model.norm_params is not None:
        actual = apply_norm(raw.select(known), model.norm_params).values
    for j, name in enumerate(model.outputs):
        if actual is not None:
            frame[name] = actual[:, j]
        frame[f"{name}_{model.kind}"] = predicted[:, j]
    store.save_frame(files.PREDICTIONS_CSV, frame)
    if actual is not None:
        print_header(f"📈 {raw.n_samples} predictions, MSE {mse(predicted, actual):.6g}")
    else:
        print_header(f"📈 {raw.n_samples} predictions for {len(model.outputs)} virtual sensors")


def cmd_pipeline(args, cfg: PipelineConfig, store: ArtifactStore) -> None:
    report = run_pipeline(cfg, store=store)
    print_header(f"✅ Pipeline done: M = {report.rows[-1].m}, mean test MSE {report.rows[-1].mean_mse:.6g}")
    print(report.mse_table().to_string())


def cmd_exp_a(args, cfg: PipelineConfig, store: ArtifactStore) -> None:
    report = run_experiment_a(cfg)
    store.save_frame(files.REPORT_CSV, report.to_frame())
    wins = sum(r.fac2t_objective >= r.kmeans_objective for r in report.rows)
    print_header(f"🧪 Experiment A: FAC2T >= K-Means in {wins}/{len(report.rows)} runs")


def cmd_exp_b(args, cfg: PipelineConfig, store: ArtifactStore) -> None:
    report, history = run_experiment_b(cfg, store=store)
    row = report.rows[0]
    print_header(
        f"🔀 Experiment B: metric {row.initial_objective:.6g} -> {row.fac2t_objective:.6g}, "
        f"ARI {row.initial_ari:.3f} -> {row.ari:.3f}"
    )

# ============================================================================
# MAIN
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="virtsense",
        description="Cluster sensors, keep one representative per cluster, predict the rest",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  virtsense --seed 7 --out runs/synth synth --sensors 60 --clusters 5 --readings 5000
  virtsense --out runs/a pipeline --input runs/synth/dataset.csv
  virtsense --config exp.json --out runs/exp-a exp-a
        """
    )
    parser.add_argument('--config', help='PipelineConfig JSON file')
    parser.add_argument('--seed', type=int, help='Seed for every random stage')
    parser.add_argument('--out', help='Run directory for artifacts')
    parser.add_argument('--log-level', help='DEBUG, INFO, WARNING or ERROR')

    sub = parser.add_subparsers(dest="command", required=True)

    def with_input(p: argparse.ArgumentParser, required: bool = True) -> argparse.ArgumentParser:
        p.add_argument('--input', required=required, help='Sensor CSV, one column per sensor')
        p.add_argument('--no-header', action='store_true', help='CSV has no header row')
        return p

    p = sub.add_parser("synth", help="Generate a planted-cluster dataset")
    p.add_argument('--sensors', type=int, required=True)
    p.add_argument('--clusters', type=int, required=True)
    p.add_argument('--readings', type=int, required=True)

    p = with_input(sub.add_parser("pca", help="Estimate the minimum representative count M0"))
    p.add_argument('--variance-fraction', type=float)

    p = with_input(sub.add_parser("kmeans", help="K-Means on every block"))
    p.add_argument('--clusters', type=int, required=True)
    p.add_argument('--block-size', type=int, required=True)

    p = with_input(sub.add_parser("fuse", help="Fuse block solutions with FAC2T"))
    p.add_argument('--blocks', required=True, help='blocks.json from the kmeans subcommand')

    p = with_input(sub.add_parser("select", help="Pick one representative per cluster"))
    p.add_argument('--clustering', required=True)

    p = with_input(sub.add_parser("train", help="Fit a regressor for the virtual sensors"))
    p.add_argument('--representatives', required=True)
    p.add_argument('--kind', choices=MODEL_KINDS, required=True)

    p = with_input(sub.add_parser("predict", help="Predict virtual sensors from a model.json"))
    p.add_argument('--model', required=True)

    with_input(sub.add_parser("pipeline", help="Run the full loop"), required=False)
    sub.add_parser("exp-a", help="Fusion quality experiment on generated datasets")
    sub.add_parser("exp-b", help="Fusion from corrupted initial solutions")
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "pca": cmd_pca,
    "kmeans": cmd_kmeans,
    "fuse": cmd_fuse,
    "select": cmd_select,
    "train": cmd_train,
    "predict": cmd_predict,
    "pipeline": cmd_pipeline,
    "exp-a": cmd_exp_a,
    "exp-b": cmd_exp_b,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    configure_logging(settings, level=args.log_level)
    try:
        cfg = _load_config(args)
        store = ArtifactStore(args.out or settings.output_dir)
        COMMANDS[args.command](args, cfg, store)
    except (VirtsenseError, OSError) as e:
        logger.error(f"❌ {args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
