import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from vbob.cli import main
from vbob.models import builtin_names, builtin_text


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, _ = run(capsys, *argv, "--json")
    return code, json.loads(out)


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv("VBOB_SEED", raising=False)


def test_list_models(capsys):
    code, data = run_json(capsys, "list-models")
    assert code == 0 and [m["name"] for m in data["models"]] == builtin_names()


def test_period_of_the_trivial_sphere(capsys):
    code, data = run_json(capsys, "period", "sphere-trivial", "--sphere", "gen", "--grid", "201")
    rec = data["periods"]["gen"]
    assert code == 0 and data["schema_version"] == "1"
    assert abs(rec["period_matrix"][0][0] - 4 * np.pi) <= 1e-6 and rec["error_estimate"] <= 1e-6


def test_verdicts(capsys):
    code, data = run_json(capsys, "verdict", "sphere-trivial")
    assert code == 0 and data["decision"] == "NonIntegrable"
    code, data = run_json(capsys, "verdict", "t1-toy", "--assert-A-integrable", "tangent algebroid")
    assert code == 0 and data["decision"] == "Integrable-conditional"
    assert data["evidence"]["shortcuts"] == ["injective core anchor"]


@pytest.mark.parametrize("argv", [
    ["axioms", "no-such-model"],
    ["axioms", "su2-star", "--no-such-flag"],
    ["frobnicate"],
    ["compat", "su2-star", "--csv"],
    ["period", "sphere-trivial", "--grid", "20"],
    ["decompose", "t1-toy", "--point", "1,2,3"],
    ["diff-ruth", "su2-star"],
])
def test_usage_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err


def test_invalid_env_seed(capsys, monkeypatch):
    monkeypatch.setenv("VBOB_SEED", "abc")
    assert run(capsys, "axioms", "t1-toy")[0] == 2


def test_numeric_failure_exits_3(capsys, tmp_path):
    p = tmp_path / "bad-leaf.vbm"
    p.write_text("name = bad-leaf\n[chart]\ncoordinates = x, y, z\nbounds = -2:2, -2:2, -2:2\n"
                 "excluded_radius = 0.1\n[poisson]\npi(x,y) = z\npi(y,z) = x\npi(z,x) = y\n"
                 "[leaf]\npoisson = main\ngamma = r*g1, r*g2, e*g3\nparams = r, e\n", encoding="utf-8")
    code, _, err = run(capsys, "area-scan", str(p), "--r", "1:1:1", "--e=0.5:0.5:1", "--grid", "21")
    assert code == 3 and "not leaf-tangent" in err


def test_residual_failure_exits_1(capsys, tmp_path):
    text = builtin_text("su2-star").replace("omega(dx,dy) = z", "omega(dx,dy) = z + 0.01*x")
    p = tmp_path / "bent.vbm"
    p.write_text(text, encoding="utf-8")
    code, data = run_json(capsys, "compat", str(p))
    assert code == 1 and data["passes"] is False
    assert data["residuals"]["d_nabla_omega_residual"] > 1e-3


@pytest.mark.parametrize("name", builtin_names())
def test_builtins_pass_axioms_compat_and_sphere_check(capsys, name):
    for cmd in ("axioms", "compat", "sphere-check"):
        code, data = run_json(capsys, cmd, name)
        assert code == 0, (cmd, data)


@pytest.mark.parametrize("name", ["pair-ruth-area", "pair-ruth-gauge", "su2-star"])
def test_ruth_commands(capsys, name):
    code, data = run_json(capsys, "ruth-check", name)
    assert code == 0
    if name == "su2-star":
        assert data["status"] == "not-applicable"
        return
    assert data["passes"]
    code, data = run_json(capsys, "diff-ruth", name)
    assert code == 0


def test_literal_convention_fails_on_gauge(capsys):
    code, data = run_json(capsys, "ruth-check", "pair-ruth-gauge", "--convention", "literal")
    assert code == 1 and data["passes"] is False


def test_holcheck_families(capsys):
    code, data = run_json(capsys, "holcheck", "--family", "synthetic")
    assert code == 0
    code, _ = run_json(capsys, "holcheck", "--family", "linear")
    assert code == 0


def test_area_scan_csv(capsys):
    code, out, _ = run(capsys, "area-scan", "su2-star", "--r", "0.5:1:0.5", "--e=-1:1:1", "--grid", "101")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 6
    for row in rows:
        r, e = float(row["r"]), float(row["e"])
        assert float(row["area"]) == pytest.approx(4 * np.pi * r / (1 + e * e / 2), rel=1e-5)
    code, data = run_json(capsys, "area-scan", "su2-star", "--r", "1:1:1", "--e", "0:0:1", "--grid", "51")
    assert code == 0 and len(data["rows"]) == 1


def test_output_is_byte_identical_across_runs(capsys):
    argv = ["compat", "su2-star", "--json", "--samples", "30"]
    first = run(capsys, *argv)[1]
    assert run(capsys, *argv)[1] == first
    argv = ["axioms", "su2-star"]
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]


def test_env_seed_overrides_flag(capsys, monkeypatch):
    argv = ["diff-ruth", "pair-ruth-exp", "--json"]
    a = json.loads(run(capsys, *argv, "--seed", "5")[1])
    monkeypatch.setenv("VBOB_SEED", "5")
    b = json.loads(run(capsys, *argv, "--seed", "9")[1])
    assert a == b
    monkeypatch.delenv("VBOB_SEED")
    c = json.loads(run(capsys, *argv, "--seed", "9")[1])
    assert c["points"] != a["points"]


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "vbob.cli", "list-models"], capture_output=True, text=True)
    assert out.returncode == 0 and "su2-star" in out.stdout
    out = subprocess.run([sys.executable, "-m", "vbob.cli", "axioms", "nope"], capture_output=True, text=True)
    assert out.returncode == 2
