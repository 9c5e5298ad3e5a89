import json
import subprocess
import sys

import pytest

from confgate.cli import main

SMALL = """schema_version = 1
seed = 3
[data]
n_classes = 3
dim = 8
train_per_class = 60
val_per_class = 30
test_per_class = 30
[model]
hidden = [12]
epochs = 8
lr = 0.2
[attack]
budget = 100
n_samples = 4
[defense]
kind = "RND"
nu = [0.1]
tau = [0.0, 1.0]
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


def test_missing_config_exits_2(capsys):
    assert main(["grid", "--config", "missing.toml"]) == 2
    assert "missing.toml" in capsys.readouterr().err


def test_help_exits_0(capsys):
    assert main(["report", "--help"]) == 0
    assert "usage" in capsys.readouterr().out


def test_unknown_flag_exits_2(capsys):
    assert main(["grid", "--frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err


def test_frontier_three_points(tmp_path, capsys):
    csv = tmp_path / "r.csv"
    csv.write_text("attack,defense,nu,tau,ca,ra\nhsja,RND,0.02,0.0,0.95,0.47\n"
                   "hsja,RND,0.05,1.0,0.82,0.71\nhsja,RND,0.1,1.0,0.80,0.50\n")
    plot = tmp_path / "plot.json"
    assert main(["frontier", str(csv), "--emit-plot-data", str(plot)]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert out == ["nu=0.02 tau=0  CA 0.95 / RA 0.47", "nu=0.05 tau=1  CA 0.82 / RA 0.71"]
    assert json.loads(plot.read_text())["frontier"] == {"x": [0.95, 0.82], "y": [0.47, 0.71]}


def test_pipeline(tmp_path, config, capsys):
    data_dir = tmp_path / "data"
    assert main(["gen-data", "--config", str(config), "--out", str(data_dir)]) == 0
    assert (data_dir / "train_x.f32").exists()
    assert main(["train", "--config", str(config), "--out", str(tmp_path / "m")]) == 0
    ckpt = tmp_path / "m" / "model"
    assert main(["calibrate", str(ckpt), "--config", str(config)]) == 0
    assert "ECE" in capsys.readouterr().out

    tensors = config.read_text().replace('[data]\n', f'[data]\nkind = "tensors"\npath = "{data_dir}"\n')
    tensors = tensors.replace("[model]\n", f'[model]\ncheckpoint = "{ckpt}"\n')
    cfg2 = tmp_path / "tensors.toml"
    cfg2.write_text(tensors)
    run = tmp_path / "run"
    assert main(["grid", "--config", str(cfg2), "--out", str(run), "--seed", "4"]) == 0
    assert (run / "results.csv").exists()
    assert main(["report", str(run / "results.csv")]) == 0
    assert main(["attack", "--config", str(config), "--out", str(tmp_path / "one"),
                 "--nu", "0.2", "--tau", "0.5", "--repeats", "2"]) == 0
    out = capsys.readouterr().out
    assert "nu=0.2 tau=0.5" in out
    assert (tmp_path / "one" / "results.csv").read_text().splitlines()[1].split(",")[7] == "8"


def test_bad_grid_value_exits_2(tmp_path, config):
    bad = tmp_path / "bad.toml"
    bad.write_text(SMALL.replace("tau = [0.0, 1.0]", "tau = [2.0]"))
    assert main(["grid", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2


def test_console_script():
    r = subprocess.run([sys.executable, "-m", "confgate.cli", "report", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "--mode" in r.stdout
