"""Grid execution over (attack, defense, nu, tau) cells and its on-disk outputs.

Every random draw is keyed by a hash of the master seed and the cell/sample
identity, so outputs do not depend on the worker count or on which other
cells are in the grid.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .attack import AttackConfig, InitFailure, Probe, run_attack
from .config import ExperimentConfig
from .core import QueryLedger, RngStream, derive_seed
from .data import Dataset, generate_splits, load_dataset, mean_distance_scale
from .defense import DefenseParam, GateConfig, GatedClassifier
from .evaluation import ExperimentPoint, compute_asr, compute_ca, frontier_indices, is_successful
from .model import (MlpClassifier, TemperatureScaler, calibrate, load_checkpoint, train)

CSV_COLUMNS = ["attack", "defense", "nu", "tau", "ca", "ra", "asr", "n", "mean_queries", "seed"]

# attacker choices, oracle (defense) draws and success evaluation use separate streams
ATTACKER, ORACLE, EVALUATION, CLEAN = 0, 1, 2, 3


def load_data(cfg: ExperimentConfig) -> dict[str, Dataset]:
    spec = cfg.data
    if spec.kind == "tensors":
        return load_dataset(spec.path)
    per_class = {"train": spec.train_per_class, "val": spec.val_per_class, "test": spec.test_per_class}
    shape = tuple(spec.shape) if spec.shape else None
    return generate_splits(spec.n_classes, spec.dim, per_class, spec.spread,
                           RngStream(derive_seed(cfg.seed, "data")), spec.radius, shape)


def fit_model(cfg: ExperimentConfig, splits: dict[str, Dataset]) -> tuple[MlpClassifier, TemperatureScaler]:
    """Train on ``train`` and calibrate on ``val`` (or load the configured checkpoint)."""
    if cfg.model.checkpoint:
        return load_checkpoint(cfg.model.checkpoint)
    tr = splits["train"]
    d = int(np.prod(tr.shape))
    n = int(tr.y.max()) + 1
    sizes = [d, *cfg.model.hidden, n]
    model = MlpClassifier.init(sizes, RngStream(derive_seed(cfg.seed, "init")).generator(), tr.shape)
    model, _ = train(model, tr.X, tr.y, cfg.model.epochs, cfg.model.lr,
                     RngStream(derive_seed(cfg.seed, "train")).generator(), cfg.model.batch_size)
    scaler = TemperatureScaler()
    if "val" in splits:
        val = splits["val"]
        scaler = calibrate(model.logits_batch(val.X), val.y)
    return model, scaler


@dataclass(frozen=True)
class Cell:
    index: int
    attack: str
    defense: str
    nu: float
    tau: float

    def seed(self, master: int) -> int:
        return derive_seed(master, self.attack, self.defense, self.nu, self.tau)

    def sample_seed(self, master: int, sample: int, repeat: int) -> int:
        return derive_seed(master, self.attack, self.defense, self.nu, self.tau, sample, repeat)


def grid_cells(cfg: ExperimentConfig) -> list[Cell]:
    combos = [(nu, tau) for nu in cfg.defense.nu for tau in cfg.defense.tau]
    return [Cell(i, cfg.attack.kind, cfg.defense.kind.upper(), float(nu), float(tau))
            for i, (nu, tau) in enumerate(combos)]


@dataclass
class Context:
    """Everything a worker needs; shipped once per process."""

    master: int
    model: MlpClassifier
    scaler: TemperatureScaler
    X: np.ndarray
    y: np.ndarray
    attack: AttackConfig
    cells: list[Cell]

    def classifier(self, cell: Cell) -> GatedClassifier:
        return GatedClassifier(self.model, self.scaler, DefenseParam(cell.defense, cell.nu),
                               GateConfig(cell.tau))


def attack_sample(ctx: Context, cell: Cell, sample: int, repeat: int) -> dict:
    """Attack test sample ``sample`` against the cell's gated classifier."""
    seed = cell.sample_seed(ctx.master, sample, repeat)
    g = ctx.classifier(cell)
    x0, label = ctx.X[sample], int(ctx.y[sample])
    probe = Probe(g, label, QueryLedger(ctx.attack.budget), RngStream(seed, ORACLE).generator())
    record = {"sample": sample, "repeat": repeat}
    try:
        trace = run_attack(probe, x0, ctx.attack, RngStream(seed, ATTACKER).generator())
    except InitFailure:
        record.update(milestones=[], queries=probe.used, distortion=None, success=False, init_failure=True)
        return record
    trace.success = is_successful(trace.x_adv, x0, label, g, ctx.attack.epsilon,
                                  RngStream(seed, EVALUATION).generator())
    dist = trace.best_distortion
    record.update(milestones=[[m.queries, m.distortion] for m in trace.milestones],
                  queries=trace.queries, distortion=None if math.isinf(dist) else dist,
                  success=trace.success, init_failure=False)
    return record


_CTX: Context | None = None


def _init_worker(ctx: Context) -> None:
    global _CTX
    _CTX = ctx


def _run_task(task: tuple[int, int, int]) -> dict:
    cell_idx, sample, repeat = task
    cell = _CTX.cells[cell_idx]
    try:
        return attack_sample(_CTX, cell, sample, repeat)
    except Exception as exc:  # recorded per cell; the grid carries on
        return {"sample": sample, "repeat": repeat, "error": f"{type(exc).__name__}: {exc}"}


def select_attacked(model: MlpClassifier, test: Dataset, n: int, master: int) -> list[int]:
    """First ``n`` test indices, in a seeded random order, that the undefended model gets right."""
    correct = np.argmax(model.logits_batch(test.X), axis=1) == test.y
    order = RngStream(derive_seed(master, "samples")).generator().permutation(len(test))
    chosen = [int(i) for i in order if correct[i]][:n]
    if len(chosen) < n:
        raise RuntimeError(f"only {len(chosen)} correctly classified test samples, need {n}")
    return chosen


def _fmt(v: float) -> str:
    return repr(float(v))


def _trace_lines(cell: Cell, records: list[dict]) -> str:
    out = io.StringIO()
    for r in records:
        base = {"cell": cell.index, "sample": r["sample"], "repeat": r["repeat"]}
        for q, d in r["milestones"]:
            out.write(json.dumps({**base, "queries": q, "distortion": d}, sort_keys=True) + "\n")
        final = {**base, "final": True, "success": r["success"], "queries": r["queries"],
                 "distortion": r["distortion"], "init_failure": r["init_failure"]}
        out.write(json.dumps(final, sort_keys=True) + "\n")
    return out.getvalue()


@dataclass
class GridResult:
    points: list[ExperimentPoint]
    frontier: list[int]
    manifest: dict
    out: Path


def run_grid(cfg: ExperimentConfig, out: str | Path | None = None, workers: int | None = None) -> GridResult:
    """Run every cell, then write ``results.csv``, traces, ``frontier.json`` and ``manifest.json``."""
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    out = Path(out or cfg.out)
    workers = workers or cfg.workers
    splits = load_data(cfg)
    model, scaler = fit_model(cfg, splits)
    test = splits["test"]
    attacked = select_attacked(model, test, cfg.attack.n_samples, cfg.seed)
    eps = cfg.attack.epsilon
    if eps == "auto":
        eps = 0.5 * mean_distance_scale(splits["train"])
    attack_cfg = AttackConfig(kind=cfg.attack.kind, budget=cfg.attack.budget, epsilon=float(eps))
    cells = grid_cells(cfg)
    ctx = Context(cfg.seed, model, scaler, test.X, test.y, attack_cfg, cells)

    tasks = [(c.index, s, r) for c in cells for s in attacked for r in range(cfg.attack.repeats)]
    if workers == 1:
        _init_worker(ctx)
        results = [_run_task(t) for t in tasks]
    else:
        chunk = max(1, len(tasks) // (workers * 8))
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(ctx,)) as ex:
            results = list(ex.map(_run_task, tasks, chunksize=chunk))

    by_cell: dict[int, list[dict]] = {c.index: [] for c in cells}
    for (ci, _, _), rec in zip(tasks, results):
        by_cell[ci].append(rec)

    (out / "traces").mkdir(parents=True, exist_ok=True)
    points, rows, cell_meta = [], [], []
    undefended_ca = compute_ca(GatedClassifier(model, scaler), test.X, test.y)
    for cell in cells:
        recs = by_cell[cell.index]
        meta = {"index": cell.index, "attack": cell.attack, "defense": cell.defense,
                "nu": cell.nu, "tau": cell.tau, "seed": cell.seed(cfg.seed)}
        errors = [r["error"] for r in recs if "error" in r]
        if errors:
            meta.update(status="failed", error=errors[0])
            cell_meta.append(meta)
            continue
        g = ctx.classifier(cell)
        ca = compute_ca(g, test.X, test.y, RngStream(cell.seed(cfg.seed), CLEAN))
        asr, ra = compute_asr([r["success"] for r in recs])
        mean_q = float(np.mean([r["queries"] for r in recs]))
        point = ExperimentPoint(ca, ra, asr, cell.defense, cell.nu, cell.tau, cell.attack, mean_q, len(recs))
        points.append(point)
        rows.append([cell.attack, cell.defense, _fmt(cell.nu), _fmt(cell.tau), _fmt(ca), _fmt(ra),
                     _fmt(asr), str(len(recs)), _fmt(mean_q), str(meta["seed"])])
        trace_path = Path("traces") / f"cell_{cell.index:03d}.jsonl"
        (out / trace_path).write_text(_trace_lines(cell, recs))
        meta.update(status="ok", trace=str(trace_path))
        cell_meta.append(meta)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    writer.writerows(rows)
    (out / "results.csv").write_text(buf.getvalue())

    front = frontier_indices(points)
    frontier_doc = {
        "points": [{"ca": p.ca, "ra": p.ra, "nu": p.nu, "tau": p.tau, "defense": p.defense,
                    "attack": p.attack} for p in points],
        "frontier": front,
    }
    (out / "frontier.json").write_text(json.dumps(frontier_doc, indent=2, sort_keys=True) + "\n")

    manifest = {
        "tool": "confgate",
        "version": __version__,
        "config_hash": cfg.digest(),
        "config": {k: v for k, v in cfg.to_dict().items() if k not in ("out", "workers")},
        "master_seed": cfg.seed,
        "epsilon": float(eps),
        "temperature": scaler.T,
        "undefended_ca": undefended_ca,
        "attacked_samples": attacked,
        "cells": cell_meta,
        "outputs": {"results": "results.csv", "frontier": "frontier.json"},
        # excluded from reproducibility comparisons
        "runtime": {"started": started, "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                    "workers": workers},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return GridResult(points, front, manifest, out)


def read_results(path: str | Path) -> list[dict]:
    """Rows of a results CSV with numeric fields converted."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    missing = {"nu", "tau", "ca", "ra"} - set(rows[0] if rows else {})
    if not rows or missing:
        raise ValueError(f"{path}: expected columns nu, tau, ca, ra")
    for r in rows:
        for k in ("nu", "tau", "ca", "ra", "asr", "mean_queries"):
            if r.get(k) not in (None, ""):
                r[k] = float(r[k])
    return rows


def points_from_rows(rows: list[dict]) -> list[ExperimentPoint]:
    return [ExperimentPoint(r["ca"], r["ra"], defense=r.get("defense", "NONE"), nu=r["nu"],
                            tau=r["tau"], attack=r.get("attack", "")) for r in rows]
