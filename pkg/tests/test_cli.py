from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from oscint.cli import main


def _run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


def test_check_phase(capsys):
    code, rep = _run(capsys, ["check-phase", "--phase", "model_parabolic_cone", "--samples", "100"])
    assert code == 0 and rep["ok"]
    assert rep["schema_version"] == "1.0"
    assert rep["passes"]["homogeneous"]


def test_check_phase_with_flatness(capsys):
    code, rep = _run(capsys, ["check-phase", "--phase", "circular_cone", "--samples", "100", "--K", "8"])
    assert "kflat" in rep
    assert code == (0 if rep["ok"] else 1)


def test_kakeya_small(capsys, tmp_path):
    out = tmp_path / "rep.json"
    table = tmp_path / "vol.csv"
    code = main(["kakeya", "--lambda", "64,128,256", "--p", "3.0", "--samples", "20000", "--out", str(out),
                 "--csv", str(table)])
    rep = json.loads(out.read_text())
    assert code == (0 if rep["ok"] else 1)
    assert [m["lambda"] for m in rep["measurements"]] == [64.0, 128.0, 256.0]
    rows = list(csv.DictReader(table.open()))
    assert len(rows) == 3 and float(rows[0]["volume"]) > 0


def test_kakeya_rejects_n3(capsys):
    code, rep = _run(capsys, ["kakeya", "--n", "3", "--lambda", "64,128,256", "--samples", "1000"])
    assert code == 2 and rep["error"] == "DomainError" and not rep["ok"]


def test_partition_with_csv(capsys, tmp_path):
    table = tmp_path / "cells.csv"
    code, rep = _run(capsys, ["partition", "--D", "2", "--points", "2000", "--csv", str(table)])
    assert code == 0 and rep["passes"]["oracle"]
    rows = list(csv.DictReader(table.open()))
    assert len(rows) == 4
    assert sum(float(r["mass"]) for r in rows) + rep["wall_fraction"] * 2000 == pytest.approx(2000)


def test_rescale_check(capsys):
    code, rep = _run(capsys, ["rescale-check", "--phase", "model_parabolic_cone", "--lambda", "256", "--samples", "16"])
    assert code == 0
    assert rep["identity_error"] <= 1e-6 and rep["wrong_L_error"] >= 1e-2


def test_rescale_check_bad_omega(capsys):
    code, rep = _run(capsys, ["rescale-check", "--phase", "kakeya_n", "--n", "4", "--omega", "0.1"])
    assert code == 2


def test_transverse_example_plane(capsys):
    code, rep = _run(capsys, ["transverse", "--n", "4", "--V-spec", "1,0,0,1;0,1,0,0", "--K", "8"])
    assert code == 0
    assert rep["counts"] == {"narrow": 1, "broad": 0}


def test_transverse_random(capsys):
    code, rep = _run(capsys, ["transverse", "--n", "4", "--phase", "kakeya_n", "--count", "6"])
    assert code == 0 and len(rep["configurations"]) == 6


def test_hormander_short(capsys):
    code, rep = _run(capsys, ["hormander", "--phase", "model_parabolic_cone", "--R", "16,32,64", "--trials", "2"])
    assert code == 0
    assert len(rep["result"]["ratios"]) == 2


def test_broadnorm_small(capsys):
    code, rep = _run(capsys, ["broadnorm", "--R", "16", "--spacing", "2", "--K", "4", "--candidates", "4"])
    assert code == 0
    assert 0 <= rep["broad_norm"] <= rep["full_norm"] * 2


def test_bad_arguments_exit_with_usage():
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_console_script_module():
    res = subprocess.run([sys.executable, "-m", "oscint.cli", "partition", "--D", "2", "--points", "500"],
                         capture_output=True, text=True, timeout=120)
    assert res.returncode == 0
    assert json.loads(res.stdout)["command"] == "partition"
