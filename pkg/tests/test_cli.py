import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from homoclinic import export
from homoclinic.cli import main
from homoclinic.config import ConfigError, parse_config


def test_empty_config_defaults():
    cfg = parse_config("")
    assert (cfg.T, cfg.n) == (12.0, 2399)
    assert cfg.solver.tol == 1e-6 and cfg.solver.seed == 0
    assert cfg.problem == "paper-example" and cfg.problem_params["a"] == 3.0
    assert cfg.grid().h == pytest.approx(0.01)


def test_negative_T_names_key():
    with pytest.raises(ConfigError, match=r"grid\.T"):
        parse_config("grid:\n  T: -1\n")


def test_unknown_key_suggestion():
    with pytest.raises(ConfigError, match="did you mean 'grid'"):
        parse_config("grdi:\n  T: 3\n")
    with pytest.raises(ConfigError, match=r"solver\.tl.*'tol'"):
        parse_config("solver: {tl: 1.0e-6}\n")


def test_parse_error_has_line():
    with pytest.raises(ConfigError, match="line 3, column 6"):
        parse_config("grid:\n  T: 1\n  n: @x\n")


@pytest.mark.parametrize("text,key", [
    ("grid: {n: 2.5}", "grid.n"),
    ("solver: {tol: 0}", "solver.tol"),
    ("solver: {max_iter: yes}", "solver.max_iter"),
    ("problem: {a: -2}", "problem.a"),
    ("problem: {name: paper-exampel}", "problem.name"),
])
def test_validation_names_key(text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(text)


def test_overrides_and_seed():
    cfg = parse_config("problem: {name: harmonic-oscillator, m: 4}\ngrid: {T: 8, n: 799}\n"
                       "solver: {extra_starts: 0, dedupe_tol: 1.0e-4}\noutput: {dir: res}\n",
                       seed=7)
    assert cfg.problem == "harmonic-oscillator" and cfg.problem_params == {"N": 1, "m": 4.0}
    assert cfg.solver.seed == 7 and cfg.solver.extra_starts == 0
    assert cfg.output_dir == "res"
    assert cfg.make_problem().name == "harmonic-oscillator"


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_format_round_trips(x):
    assert float(export.format_float(x)) == x


def test_json_dump_stable_and_nonfinite():
    doc = {"b": 1.0 / 3.0, "a": [np.float64(2.5), np.int64(3), True, None], "c": math.inf}
    text = export.dumps(doc)
    back = json.loads(text)
    assert list(back) == ["b", "a", "c"]
    assert back["b"] == 1.0 / 3.0 and back["c"] is None
    assert text == export.dumps(doc)


def _check_outputs(out):
    for p in out.iterdir():
        raw = p.read_bytes()
        assert b"\r" not in raw
        raw.decode("utf-8")
        if p.suffix == ".json":
            json.loads(raw)
        elif p.suffix == ".csv":
            rows = list(csv.reader(raw.decode().splitlines()))
            assert len(rows) >= 2
            assert all(len(r) == len(rows[0]) for r in rows)
            np.array(rows[1:], dtype=float)


def test_spectrum_command(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["spectrum", "--out", str(a)]) == 0
    assert main(["spectrum", "--out", str(b)]) == 0
    summary = json.loads((a / "summary.json").read_text())
    assert summary["ell"] == 2 and summary["n_minus"] == 1 and summary["n_zero"] == 0
    assert summary["m0"] == pytest.approx(3.0)
    rows = (a / "eigenvalues.csv").read_text().splitlines()
    assert rows[0] == "index,lambda" and len(rows) == 2400
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    _check_outputs(a)


def test_check_command(tmp_path):
    assert main(["check", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "conditions.json").read_text())
    assert doc["W4"]["holds"] and doc["W4"]["stable"]
    assert doc["conditions"]["W3_holds"] is True
    assert doc["conditions"]["m0"] == pytest.approx(3.0)
    _check_outputs(tmp_path)


def test_solve_then_verify(tmp_path):
    assert main(["solve", "--out", str(tmp_path)]) == 0
    solve = json.loads((tmp_path / "solve.json").read_text())
    assert solve["report"]["status"] == "converged"
    assert main(["verify", "--out", str(tmp_path)]) == 0
    ver = json.loads((tmp_path / "verification.json").read_text())
    assert ver["passed"] is True
    # the stored solution was already critical
    assert ver["solve"]["start"] == "file" and ver["solve"]["iterations"] == 0
    assert ver["solve"]["critical_value"] == pytest.approx(solve["report"]["critical_value"],
                                                           rel=1e-12)
    header = (tmp_path / "solution.csv").read_text().splitlines()[0]
    assert header == "t,u_1"
    _check_outputs(tmp_path)


def test_verify_rejects_foreign_grid(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("grid: {T: 6, n: 299}\n")
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert main(["verify", "--out", str(tmp_path)]) == 1
    err = json.loads((tmp_path / "error.json").read_text())
    assert err["error"] == "ValueError" and err["origin"].startswith("cli:")


def test_bad_config_writes_error(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("grdi: {T: 3}\n")
    out = tmp_path / "o"
    assert main(["spectrum", "--config", str(cfg), "--out", str(out)]) == 2
    err = json.loads((out / "error.json").read_text())
    assert err["origin"] == "config" and "grid" in err["message"]


def test_multi_solve_geometry_failure(tmp_path):
    # W = 0: Phi is coercive on E+, so no linking R exists below the cap
    cfg = tmp_path / "h.yaml"
    cfg.write_text("problem: {name: harmonic-oscillator, m: 4}\ngrid: {T: 4, n: 99}\n")
    assert main(["multi-solve", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    doc = json.loads((tmp_path / "multi_solve.json").read_text())
    assert doc["pairs_found"] == 0 and doc["runs"][0]["status"] == "geometry_failure"
