import json
import subprocess
import sys

import numpy as np
import pytest

from topolyap import __version__
from topolyap.cli import main
from topolyap.io import fmt, read_csv

KITAEV = """
name = "k"
seed = 4
[model]
kind = "kitaev"
N = 8
J = 2.0
Delta = 1.0
mu = 2.0
[initial]
preset = "single_site"
site = 1
C = [1.0, 0.0]
[law]
kind = "p_matrix"
target = "right"
gains = [10.0, 10.0]
[integrator]
dt = 0.01
t_end = 3.0
record_every = 50
fidelity_targets = ["right"]
"""

SWEEP = KITAEV + """
[[sweeps]]
label = "eps"
kind = "initial_mode"
values = [0.0, 0.05]
runs_per_point = 2
horizon = "t_end"
"""


def _write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_evolve_writes_csv_and_summary(tmp_path, capsys):
    cfg = _write(tmp_path, KITAEV)
    out = tmp_path / "out"
    assert main(["evolve", "--config", cfg, "--out", str(out), "--seed", "9"]) == 0
    meta, header, rows = read_csv(out / "k_trajectory.csv")
    assert meta["schema_version"] == "1" and meta["seed"] == "9"
    assert json.loads(meta["config"])["model"]["N"] == 8
    assert header == ["t", "O_left", "O_right", "V", "f_1", "f_2"]
    assert [float(r[0]) for r in rows] == pytest.approx([0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
    s = json.loads((out / "k_summary.json").read_text())
    for key in ("schema_version", "final_occupations", "fidelity", "stop_time", "config",
                "software_version", "seed"):
        assert key in s
    assert s["seed"] == 9 and s["software_version"] == __version__
    assert s["stop_time"] == pytest.approx(3.0)
    assert s["fidelity"] == pytest.approx(s["final_occupations"]["right"])


def test_record_every_flag(tmp_path):
    cfg = _write(tmp_path, KITAEV)
    assert main(["evolve", "--config", cfg, "--out", str(tmp_path), "--record-every",
                 "100"]) == 0
    _, _, rows = read_csv(tmp_path / "k_trajectory.csv")
    assert len(rows) == 4


def test_spectrum_small_chain(tmp_path):
    cfg = _write(tmp_path, KITAEV.replace("N = 8", "N = 4"))
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path)]) == 0
    _, header, rows = read_csv(tmp_path / "k_spectrum.csv")
    assert header == ["index", "eigenvalue", "edge_label"]
    w = np.array([float(r[1]) for r in rows])
    assert len(rows) == 8
    assert np.max(np.abs(w + w[::-1])) < 1e-9


def test_sweep_outputs_are_byte_identical(tmp_path):
    cfg = _write(tmp_path, SWEEP)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["sweep", "--config", cfg, "--out", str(a)]) == 0
    assert main(["sweep", "--config", cfg, "--out", str(b), "--workers", "2"]) == 0
    for f in ("k_sweep_eps.csv", "k_sweep_eps.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    assert main(["sweep", "--config", cfg, "--out", str(c), "--seed", "5"]) == 0
    assert (a / "k_sweep_eps.csv").read_bytes() != (c / "k_sweep_eps.csv").read_bytes()
    meta, header, rows = read_csv(a / "k_sweep_eps.csv")
    assert header[:2] == ["axis_value", "mean_fidelity"] and len(rows) == 2
    js = json.loads((a / "k_sweep_eps.json").read_text())
    assert js["master_seed"] == 4 and len(js["runs"]) == 2


def test_exit_code_config_error(tmp_path, capsys):
    cfg = _write(tmp_path, KITAEV.replace("N = 8", "N = -8"))
    assert main(["evolve", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "model.N" in capsys.readouterr().err
    assert main(["evolve", "--config", str(tmp_path / "nope.toml")]) == 2
    empty_axis = SWEEP.replace("values = [0.0, 0.05]", "values = []")
    assert main(["sweep", "--config", _write(tmp_path, empty_axis, "e.toml")]) == 2
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_exit_code_numerical_error(tmp_path, capsys):
    cfg = _write(tmp_path, KITAEV.replace("dt = 0.01", "dt = 0.3"))
    assert main(["evolve", "--config", cfg, "--out", str(tmp_path)]) == 3
    assert "NormDrift" in capsys.readouterr().err


def test_exit_code_missing_edge_mode(tmp_path, capsys):
    text = """
[model]
kind = "ssh"
N = 21
J = 1.0
delta = 0.0
mu = 2.0
[initial]
preset = "uniform_creation"
[law]
kind = "overlap"
target = "right"
gains = [2.0]
[integrator]
t_end = 1.0
"""
    assert main(["evolve", "--config", _write(tmp_path, text), "--out", str(tmp_path)]) == 4
    assert "NoMidGapMode" in capsys.readouterr().err


def test_presets_list(capsys):
    assert main(["presets", "list"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("fig1 ") and len(lines) == 13


def test_presets_run_spectrum(tmp_path, capsys):
    pytest.importorskip("matplotlib")
    assert main(["presets", "run", "fig1", "--out", str(tmp_path), "--svg"]) == 0
    _, _, rows = read_csv(tmp_path / "fig1_spectrum.csv")
    zero = [int(r[0]) for r in rows if abs(float(r[1])) < 1e-6]
    assert zero == [30, 31]
    assert (tmp_path / "fig1_spectrum.svg").exists()
    _, header, edge = read_csv(tmp_path / "fig1_edge_left.csv")
    assert header[:3] == ["site", "X", "Y"] and len(edge) == 30
    assert main(["presets", "run", "fig99"]) == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "topolyap.cli", "presets", "list"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "fig11" in r.stdout


def test_fmt_twelve_digits():
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(7) == "7"
    assert fmt(1e-20) == "1e-20"
