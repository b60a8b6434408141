import io
import json
import subprocess
import sys

import numpy as np
import pytest

from gnepkit.cli import run_cli
from gnepkit.gamefile import FIXTURES, load_game


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_cli(list(argv), out, err)
    text = out.getvalue()
    return code, (json.loads(text) if text else None), err.getvalue(), text


def test_examples_list():
    code, rep, _, _ = run("examples", "--list")
    assert code == 0
    assert rep["result"]["fixtures"] == list(FIXTURES)
    assert set(rep) == {"command", "config", "result", "warnings", "wall_ms"}


def test_examples_materialize(tmp_path):
    code, rep, _, _ = run("examples", "wedge", "--dir", str(tmp_path))
    assert code == 0
    g = load_game(str(tmp_path / "wedge.toml"))
    assert g.name == "wedge"


def test_solve_reduction():
    code, rep, err, _ = run("solve", "aad2014", "--method", "reduction", "--no-timestamp")
    assert code == 0
    assert np.allclose(rep["result"]["solve"]["point"], [0.0, 1.0], atol=1e-5)
    assert rep["result"]["verdict"] == "Certified"
    assert rep["wall_ms"] is None
    assert "Certified" in err


def test_verify_refutes_origin():
    code, rep, _, _ = run("verify", "aad2014", "--point", "0,0")
    assert code == 1
    assert rep["result"]["verdict"] == "Refuted"
    assert rep["result"]["regrets"][0] == pytest.approx(1.75, abs=1e-6)


def test_discrepancy_warning_in_report():
    code, rep, err, _ = run("verify", "cavazzuti", "--point", "0,-1")
    assert code == 0
    assert any(w.startswith("paper_discrepancy") for w in rep["warnings"])
    assert "warning" in err


@pytest.mark.parametrize(
    "argv",
    [
        ("frobnicate",),
        ("verify", "aad2014"),
        ("verify", "aad2014", "--point", "0,a"),
        ("verify", "aad2014", "--point", "0,0,0"),
        ("verify", "/nonexistent.toml", "--point", "0"),
        ("cones", "aad2014", "--point", "0,0", "--player", "3"),
        ("examples", "nosuch"),
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    code, rep, _, _ = run(*argv)
    assert code == 2
    assert rep is None


def test_bad_game_file_reports_position(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text('[game]\nplayers = 1\n\n[objective.1]\nexpr = "x1 +"\n\n[set]\ntype = "box"\nlo = [0]\nhi = [1]\n')
    code, _, err, _ = run("verify", str(p), "--point", "0.5")
    assert code == 2
    assert "[objective.1] line 5" in err


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("GNEP_SEED", "7")
    _, rep, _, _ = run("examples", "--list")
    assert rep["config"]["seed"] == 7
    _, rep, _, _ = run("examples", "--list", "--seed", "9")
    assert rep["config"]["seed"] == 9
    monkeypatch.delenv("GNEP_SEED")
    _, rep, _, _ = run("examples", "--list")
    assert rep["config"]["seed"] == 42


@pytest.mark.parametrize(
    "argv",
    [
        ("solve", "cavazzuti", "--method", "best-response"),
        ("coercive", "hyperbola", "--condition", "c3", "--budget", "50"),
        ("cones", "qc-l1", "--point", "10,0,0", "--kind", "adjusted", "--direction", "1,2"),
        ("lsc", "hull3d"),
    ],
)
def test_reports_are_byte_identical(argv):
    first = run(*argv, "--no-timestamp")[3]
    second = run(*argv, "--no-timestamp")[3]
    assert first == second


def test_lsc_and_coercive_exit_codes():
    assert run("lsc", "hull3d")[0] == 1
    assert run("lsc", "hull3d", "--control")[0] == 0
    code, rep, _, _ = run("coercive", "wedge", "--condition", "c1", "--rho", "1", "--audit", "--budget", "50")
    assert rep["result"]["audit"]["probes"][0]["norm"] == pytest.approx(2.0)


def test_module_entry_point():
    p = subprocess.run([sys.executable, "-m", "gnepkit", "examples", "--list"], capture_output=True, text=True)
    assert p.returncode == 0
    assert json.loads(p.stdout)["result"]["fixtures"] == list(FIXTURES)
