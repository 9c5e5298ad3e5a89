import csv
import json
import math
from dataclasses import replace
from statistics import NormalDist

import numpy as np
import pytest

from confgate.config import ConfigError, config_from_dict, load_config
from confgate.core import RngStream
from confgate.data import class_means, generate_blobs, generate_splits, load_dataset, save_dataset
from confgate.grid import read_results, run_grid
from confgate.report import marked_cells, render_table


# ---------------------------------------------------------------------------
# data


def test_blobs_collapse_to_means():
    ds = generate_blobs(4, 3, 5, 1e-12, np.random.default_rng(0))
    means = class_means(4, 3, 0.25)
    assert np.allclose(ds.X, means[ds.y], atol=1e-9)


def test_blobs_bayes_rule():
    # means (0.75, 0.5) and (0.5, 0.75): Bayes error Phi(-0.177/0.03) ~ 2e-9
    assert NormalDist().cdf(-math.sqrt(2) * 0.25 / 2 / 0.03) < 1e-3
    ds = generate_blobs(2, 2, 5000, 0.03, np.random.default_rng(1))
    pred = (ds.X[:, 1] > ds.X[:, 0]).astype(int)
    assert np.mean(pred == ds.y) >= 0.999


def test_blobs_reproducible_and_validated():
    a = generate_blobs(3, 4, 10, 0.1, np.random.default_rng(2))
    b = generate_blobs(3, 4, 10, 0.1, np.random.default_rng(2))
    assert np.array_equal(a.X, b.X) and a.X.min() >= 0 and a.X.max() <= 1
    with pytest.raises(ValueError):
        generate_blobs(3, 4, 10, 0.0, np.random.default_rng(2))
    with pytest.raises(ValueError):
        generate_blobs(9, 4, 10, 0.1, np.random.default_rng(2))


def test_dataset_roundtrip(tmp_path):
    splits = generate_splits(3, 12, {"train": 4, "val": 2, "test": 3}, 0.1, RngStream(0),
                             shape=(3, 2, 2))
    save_dataset(tmp_path, splits)
    back = load_dataset(tmp_path)
    for name in splits:
        assert np.allclose(back[name].X, splits[name].X, atol=1e-7)
        assert np.array_equal(back[name].y, splits[name].y)
        assert back[name].shape == (3, 2, 2)


# ---------------------------------------------------------------------------
# config


def test_config_roundtrip(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('schema_version = 1\nseed = 9\n[defense]\nkind = "JPEG"\nnu = [30, 60]\n'
                 'tau = [0.0, 1.0]\n[data]\nshape = [1, 4, 4]\n')
    cfg = load_config(p)
    assert cfg.seed == 9 and cfg.defense.kind == "JPEG" and cfg.data.shape == [1, 4, 4]


@pytest.mark.parametrize("raw", [
    {"schema_version": 2},
    {"bogus": 1},
    {"defense": {"nu": []}},
    {"defense": {"tau": [1.5]}},
    {"defense": {"kind": "RND", "nu": [-1.0]}},
    {"attack": {"epsilon": -1.0}},
    {"attack": {"kind": "square"}},
    {"data": {"kind": "tensors", "path": "/no/such/dir"}},
])
def test_config_errors(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_missing_config_names_path():
    with pytest.raises(ConfigError, match="missing.toml"):
        load_config("missing.toml")


# ---------------------------------------------------------------------------
# grid


def small_cfg(tmp_path, **defense):
    cfg = config_from_dict({
        "seed": 5,
        "data": {"n_classes": 3, "dim": 8, "train_per_class": 80, "val_per_class": 40, "test_per_class": 40},
        "model": {"hidden": [16], "epochs": 10, "lr": 0.2},
        "attack": {"budget": 150, "n_samples": 6},
        "defense": {"kind": "RND", "nu": [0.1], "tau": [0.0], **defense},
    })
    return replace(cfg, out=str(tmp_path))


def _bytes(out):
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*"))
            if p.is_file() and p.name != "manifest.json"}


def _manifest_core(out):
    m = json.loads((out / "manifest.json").read_text())
    m.pop("runtime")
    return m


def test_tau_zero_cells_share_clean_accuracy(tmp_path):
    res = run_grid(small_cfg(tmp_path, nu=[0.05, 0.2, 0.5], tau=[0.0]))
    cas = {p.ca for p in res.points}
    assert cas == {res.manifest["undefended_ca"]}


def test_single_cell_rerun_is_byte_identical(tmp_path):
    cfg = small_cfg(tmp_path / "a")
    run_grid(cfg)
    run_grid(replace(cfg, out=str(tmp_path / "b")))
    assert _bytes(tmp_path / "a") == _bytes(tmp_path / "b")
    assert _manifest_core(tmp_path / "a") == _manifest_core(tmp_path / "b")


def test_worker_count_does_not_change_outputs(tmp_path):
    cfg = small_cfg(tmp_path / "w1", nu=[0.05, 0.1, 0.2], tau=[0.0, 0.5, 1.0])
    run_grid(cfg, workers=1)
    run_grid(replace(cfg, out=str(tmp_path / "w8")), workers=8)
    assert _bytes(tmp_path / "w1") == _bytes(tmp_path / "w8")
    assert _manifest_core(tmp_path / "w1") == _manifest_core(tmp_path / "w8")


def test_adding_cells_keeps_existing_rows(tmp_path):
    run_grid(small_cfg(tmp_path / "one", nu=[0.1], tau=[0.5]))
    run_grid(small_cfg(tmp_path / "two", nu=[0.1, 0.3], tau=[0.5]))
    one = read_results(tmp_path / "one" / "results.csv")
    two = read_results(tmp_path / "two" / "results.csv")
    assert one[0] == two[0]


def test_ra_recomputed_from_traces(tmp_path):
    res = run_grid(small_cfg(tmp_path, nu=[0.1, 0.3], tau=[0.0, 0.8, 1.0]))
    rows = read_results(tmp_path / "results.csv")
    for row, cell in zip(rows, [c for c in res.manifest["cells"] if c["status"] == "ok"]):
        finals = [json.loads(line) for line in (tmp_path / cell["trace"]).read_text().splitlines()]
        finals = [f for f in finals if f.get("final")]
        succ = sum(f["success"] for f in finals)
        assert row["ra"] == (len(finals) - succ) / len(finals)
        assert all(f["queries"] <= 150 for f in finals)
    with open(tmp_path / "results.csv") as fh:
        assert next(csv.reader(fh)) == ["attack", "defense", "nu", "tau", "ca", "ra", "asr", "n",
                                        "mean_queries", "seed"]


def test_deterministic_defense_clean_accuracy_is_bounded(tmp_path):
    cfg = small_cfg(tmp_path, kind="JPEG", nu=[20, 60], tau=[0.0, 0.5, 0.9, 1.0])
    cfg = replace(cfg, data=replace(cfg.data, dim=16, shape=[1, 4, 4]))
    res = run_grid(cfg)
    for nu in (20.0, 60.0):
        base = next(p.ca for p in res.points if p.nu == nu and p.tau == 0.0)
        assert all(base >= p.ca for p in res.points if p.nu == nu)


def test_failed_cell_is_recorded(tmp_path):
    # random crops need (C, H, W) inputs; flat blobs make every sample fail
    res = run_grid(small_cfg(tmp_path, kind="RCR", nu=[2], tau=[0.0, 1.0]))
    status = {c["tau"]: c["status"] for c in res.manifest["cells"]}
    assert status == {0.0: "ok", 1.0: "failed"}
    assert "(C, H, W)" in next(c["error"] for c in res.manifest["cells"] if c["status"] == "failed")
    assert len(read_results(tmp_path / "results.csv")) == 1


def test_frontier_json(tmp_path):
    res = run_grid(small_cfg(tmp_path, nu=[0.1, 0.3], tau=[0.0, 1.0]))
    doc = json.loads((tmp_path / "frontier.json").read_text())
    assert len(doc["points"]) == 4 and doc["frontier"] == res.frontier
    assert set(doc["points"][0]) == {"ca", "ra", "nu", "tau", "defense", "attack"}


# ---------------------------------------------------------------------------
# report


def rows(*cells):
    return [{"nu": nu, "tau": tau, "ca": ca, "ra": ra} for nu, tau, ca, ra in cells]


def test_marking_example():
    r = rows((0.05, 0.8, 0.94, 0.59), (0.05, 1.0, 0.82, 0.71), (0.1, 1.0, 0.94, 0.53))
    assert marked_cells(r) == {(0.05, 0.8)}
    table = render_table(r)
    assert "0.94/0.59*" in table and "0.82/0.71*" not in table


def test_equal_cells_unmarked():
    r = rows(*[(nu, tau, 0.9, 0.5) for nu in (0.1, 0.2) for tau in (0.0, 0.5, 1.0)])
    assert marked_cells(r) == set()


def test_missing_baseline_column_warns():
    with pytest.warns(UserWarning, match="tau=1.0"):
        assert marked_cells(rows((0.1, 0.5, 0.9, 0.9), (0.1, 0.0, 0.5, 0.5))) == set()


def test_linear_mode_is_stricter():
    # (0.85, 0.62) beats both corners but sits under the chord between them
    r = rows((0.1, 0.0, 0.95, 0.40), (0.1, 1.0, 0.75, 0.80), (0.1, 0.5, 0.85, 0.58))
    assert marked_cells(r, "step") == {(0.1, 0.5)}
    assert marked_cells(r, "linear") == set()
