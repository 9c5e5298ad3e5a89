"""Command-line entry point: ``confgate <subcommand> [options]``.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .data import save_dataset
from .evaluation import format_point, frontier_indices
from .grid import fit_model, load_data, points_from_rows, read_results, run_grid
from .model import (CalibrationConfig, calibrate, expected_calibration_error, load_checkpoint,
                    save_checkpoint)
from .report import render_table

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="TOML experiment config")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--repeats", type=int, help="attack runs per sample (default 1)")
    p.add_argument("--workers", type=int, help="worker processes for grid cells")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="confgate",
                                     description="Confidence-gated defenses against decision-based attacks.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="write the configured dataset as tensor files")
    sub.add_parser("train", parents=[common], help="train and calibrate a model, save a checkpoint")
    p = sub.add_parser("calibrate", parents=[common], help="recalibrate a checkpoint on the val split")
    p.add_argument("checkpoint")
    p = sub.add_parser("attack", parents=[common], help="run a single (nu, tau) cell")
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--tau", type=float, required=True)
    sub.add_parser("grid", parents=[common], help="run the full nu x tau grid")
    p = sub.add_parser("frontier", parents=[common], help="print the Pareto frontier of a results CSV")
    p.add_argument("results")
    p.add_argument("--emit-plot-data", metavar="PATH", help="write x/y series as JSON")
    p = sub.add_parser("report", parents=[common], help="render a results CSV as a nu x tau table")
    p.add_argument("results")
    p.add_argument("--mode", choices=["step", "linear"], default="step")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig().validate()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out:
        cfg = replace(cfg, out=args.out)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    if args.repeats is not None:
        cfg = replace(cfg, attack=replace(cfg.attack, repeats=args.repeats))
    return cfg.validate()


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    splits = load_data(cfg)
    save_dataset(cfg.out, splits)
    print(" ".join(f"{k}={len(v)}" for k, v in splits.items()), "->", cfg.out)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    splits = load_data(cfg)
    model, scaler = fit_model(cfg, splits)
    path = Path(cfg.out) / "model"
    save_checkpoint(path, model, scaler)
    test = splits["test"]
    acc = float(np.mean(np.argmax(model.logits_batch(test.X), axis=1) == test.y))
    print(f"test accuracy {acc:.4f}, T={scaler.T:.4f} -> {path}.json")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    model, _ = load_checkpoint(args.checkpoint)
    splits = load_data(cfg)
    val = splits.get("val", splits["train"])
    logits = model.logits_batch(val.X)
    scaler = calibrate(logits, val.y)
    before = expected_calibration_error(logits, val.y, cfg=CalibrationConfig())
    after = expected_calibration_error(logits, val.y, scaler)
    save_checkpoint(args.checkpoint, model, scaler)
    print(f"T={scaler.T:.4f}  ECE {before:.4f} -> {after:.4f}")
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = _config(args)
    cfg = replace(cfg, defense=replace(cfg.defense, nu=[args.nu], tau=[args.tau])).validate()
    res = run_grid(cfg)
    for p in res.points:
        print(f"{p.defense} nu={p.nu:g} tau={p.tau:g}: {format_point(p)} "
              f"(ASR {p.asr:.2f}, mean queries {p.mean_queries:.0f})")
    return EXIT_OK if res.points else EXIT_RUNTIME


def cmd_grid(args) -> int:
    cfg = _config(args)
    res = run_grid(cfg)
    failed = [c for c in res.manifest["cells"] if c["status"] != "ok"]
    print(f"{len(res.points)} cells -> {res.out}/results.csv; frontier {len(res.frontier)} points")
    for c in failed:
        print(f"cell {c['index']} failed: {c['error']}", file=sys.stderr)
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_frontier(args) -> int:
    rows = read_results(args.results)
    points = points_from_rows(rows)
    idx = frontier_indices(points)
    for i in idx:
        p = points[i]
        print(f"nu={p.nu:g} tau={p.tau:g}  {format_point(p)}")
    if args.emit_plot_data:
        doc = {"all": {"x": [p.ca for p in points], "y": [p.ra for p in points]},
               "frontier": {"x": [points[i].ca for i in idx], "y": [points[i].ra for i in idx]},
               "xlabel": "CA", "ylabel": "RA"}
        Path(args.emit_plot_data).write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def cmd_report(args) -> int:
    print(render_table(read_results(args.results), mode=args.mode), end="")
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "calibrate": cmd_calibrate,
            "attack": cmd_attack, "grid": cmd_grid, "frontier": cmd_frontier, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
