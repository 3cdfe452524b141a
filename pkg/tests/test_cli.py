import json

import pytest

from didiv.cli import parse_columns, run


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert run(["simulate", "--design", "three_cohort", "--n", "1500", "--seed", "2",
                "--out", str(d)]) == 0
    return d


def test_estimate_happy_path(data, tmp_path, capsys):
    out = tmp_path / "est"
    assert run(["estimate", "--input", str(data / "data.csv"), "--unexposed", "never",
                "--out", str(out)]) == 0
    cells = json.loads((out / "cells.json").read_text())
    assert {(c["e"], c["l"]) for c in cells} >= {(2, 0), (3, 0), (4, 1)}
    assert "clatt" in capsys.readouterr().out


def test_config_rerun_is_byte_identical(data, tmp_path):
    out = tmp_path / "agg"
    args = ["aggregate", "--input", str(data / "data.csv"), "--agg", "es", "--l", "0",
            "--boot-reps", "50", "--seed", "7", "--out", str(out)]
    assert run(args) == 0
    first = (out / "aggregate.json").read_bytes()
    assert run(["--config", str(out / "config.json")]) == 0
    assert (out / "aggregate.json").read_bytes() == first


def test_decompose_multi_cohort_exit_1(data, tmp_path, capsys):
    assert run(["decompose", "--input", str(data / "data.csv"), "--out", str(tmp_path)]) == 1
    assert "UnsupportedLayout" in capsys.readouterr().err


def test_usage_errors_exit_2(data, tmp_path):
    assert run(["estimate", "--input", str(tmp_path / "missing.csv")]) == 2
    assert run(["aggregate", "--input", str(data / "data.csv"), "--out", str(tmp_path)]) == 2
    assert run(["estimate", "--input", str(data / "data.csv"), "--columns", "y=wage",
                "--out", str(tmp_path)]) == 2
    assert run(["frobnicate"]) == 2
    assert run([]) == 2


def test_other_commands(data, tmp_path):
    inp = str(data / "data.csv")
    assert run(["validate", "--input", inp, "--out", str(tmp_path / "v")]) == 0
    assert run(["twfeiv", "--input", inp, "--out", str(tmp_path / "t")]) == 0
    assert run(["pretrend", "--input", inp, "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "pretrend.csv").exists()
    assert run(["oracle", "--design", "effect10", "--out", str(tmp_path / "o")]) == 0
    vals = json.loads((tmp_path / "o" / "oracle.json").read_text())
    assert vals["latet"] == pytest.approx(10.0)


def test_simulate_from_spec_file_and_decompose(tmp_path):
    assert run(["simulate", "--design", "late_comparison", "--n", "400", "--out",
                str(tmp_path / "s")]) == 0
    assert run(["simulate", "--spec", str(tmp_path / "s" / "spec.json"), "--n", "400",
                "--out", str(tmp_path / "s2")]) == 0
    assert (tmp_path / "s" / "data.csv").read_bytes() == (tmp_path / "s2" / "data.csv").read_bytes()
    assert run(["decompose", "--input", str(tmp_path / "s" / "data.csv"),
                "--out", str(tmp_path / "d")]) == 0
    assert (tmp_path / "d" / "decomposition.csv").exists()


def test_rcs_mode(tmp_path):
    assert run(["simulate", "--design", "staggered", "--n", "3000", "--mode", "rcs",
                "--out", str(tmp_path / "s")]) == 0
    assert run(["estimate", "--input", str(tmp_path / "s" / "data.csv"), "--mode", "rcs",
                "--out", str(tmp_path / "e")]) == 0


def test_selftest_command(tmp_path, capsys):
    assert run(["selftest", "--out", str(tmp_path)]) == 0
    assert "0 failed" in capsys.readouterr().out


def test_parse_columns():
    assert parse_columns("unit=id, time=year") == {"unit": "id", "time": "year"}
