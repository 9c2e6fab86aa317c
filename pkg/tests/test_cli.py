import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pytest

from graphheat import cli

INPUTS = Path(__file__).resolve().parents[1] / "inputs"


def run(tmp_path, *argv):
    return cli.main(["--out", str(tmp_path), *argv])


def test_spectrum_equal_star(tmp_path):
    assert run(tmp_path, "spectrum", "--graph", str(INPUTS / "star_equal.yaml"), "--count", "7") == 0
    lines = (tmp_path / "spectrum.csv").read_bytes().split(b"\n")
    assert lines[0] == b"k,lambda,sqrt_lambda,multiplicity"
    lam = np.array([float(r.split(b",")[1]) for r in lines[1:] if r])
    np.testing.assert_allclose(lam, [0, 1, 1, 4, 9, 9, 16] * np.array(math.pi**2 / 4), rtol=1e-12)
    side = json.loads((tmp_path / "spectrum.json").read_text())
    assert side["config"]["count"] == 7 and side["result"]["count"] == 7


def _hashes(d):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(Path(d).glob("*.csv"))}


def test_deterministic_output(tmp_path):
    args = ["synthesize", "--graph", str(INPUTS / "star_uneven.yaml"), "--operator",
            str(INPUTS / "cosine_e1.yaml"), "--modes", "6"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["--out", str(a), "--seed", "3", *args]) == 0
    assert cli.main(["--out", str(b), "--seed", "3", *args]) == 0
    assert _hashes(a) == _hashes(b)
    assert b"\r" not in (a / "control.csv").read_bytes()
    res = json.loads((a / "synthesize.json").read_text())["result"]
    assert res["final_norm"] < 1e-6


@pytest.mark.parametrize(
    "argv",
    [
        ["gaps", "--graph", str(INPUTS / "tadpole.yaml")],
        ["spreading", "--graph", str(INPUTS / "tadpole.yaml"), "--operator", str(INPUTS / "linear_e1.yaml")],
        ["simulate", "--graph", str(INPUTS / "star_uneven.yaml"), "--operator", str(INPUTS / "cosine_e1.yaml"),
         "--modes", "8", "--amplitude", "2", "--frequency", "3", "--horizon", "0.2"],
        ["filter", "--modes", "5"],
        ["spectrum", "--graph", str(INPUTS / "tadpole.yaml"), "--count", "5", "--oracle-mesh", "0.01"],
    ],
)
def test_subcommands_succeed(tmp_path, argv):
    assert run(tmp_path, *argv) == 0
    assert list(tmp_path.glob("*.csv")) and list(tmp_path.glob("*.json"))


def test_validation_exit_code(tmp_path, capsys):
    assert run(tmp_path, "spectrum", "--graph", str(tmp_path / "missing.yaml")) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ValidationError"
    bad = tmp_path / "bad.yaml"
    bad.write_text("edges: []\nvertices: []\n")
    assert run(tmp_path, "spectrum", "--graph", str(bad)) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "GraphSpecError"


def test_outside_basin_is_validation(tmp_path, capsys):
    code = run(tmp_path, "steer", "--graph", str(INPUTS / "star_uneven.yaml"), "--operator",
               str(INPUTS / "cosine_e1.yaml"), "--deviation", "0.5")
    assert code == 2
    assert json.loads(capsys.readouterr().err)["error"] == "OutsideBasin"


def test_numerical_exit_code(tmp_path, capsys):
    # standard precision cannot represent this moment problem
    code = run(tmp_path, "--precision", "standard", "synthesize", "--graph", str(INPUTS / "star_uneven.yaml"),
               "--operator", str(INPUTS / "cosine_e1.yaml"), "--modes", "12", "--horizon", "1.0")
    assert code == 3
    assert json.loads(capsys.readouterr().err)["error"] in ("IllConditioned", "ResidualTooLarge")


def test_acceptance_subset(tmp_path, capsys):
    assert run(tmp_path, "acceptance", "--only", "A1", "A4") == 0
    out = capsys.readouterr().out
    assert "A1 PASS" in out and "A4 PASS" in out
    assert (tmp_path / "acceptance.csv").read_text() == "criterion,passed\nA1,1\nA4,1\n"
