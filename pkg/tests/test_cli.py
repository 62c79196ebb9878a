import json
import math

import numpy as np
import pytest

from enantio_ep import cli
from enantio_ep.io import fmt, jsonable, read_csv, write_csv, write_json

FIBER_PARAMS = """
[parameters]
DeltaGamma_per_m = 2.39
phi_t_per_m = 2.39
length_m = 10.0
ee = {ee}
n_out = 50
"""


def write_spec(tmp_path, body, name="spec.toml"):
    p = tmp_path / name
    p.write_text(body)
    return p


# --------------------------------------------------------------------- io

def test_fmt():
    assert fmt(-0.0) == "0"
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(math.nan) == "nan" and fmt(-math.inf) == "-inf"
    assert fmt(True) == "true" and fmt(np.int64(3)) == "3" and fmt("x") == "x"


def test_csv_roundtrip(tmp_path):
    x = np.random.default_rng(0).normal(size=20)
    p = write_csv(tmp_path / "a.csv", {"x_au": x, "flag": [True] * 20})
    back = read_csv(p)
    assert np.array_equal(back["x_au"], x)
    assert back["flag"].dtype == bool and back["flag"].all()
    with pytest.raises(ValueError):
        write_csv(tmp_path / "b.csv", {"a": [1], "b": [1, 2]})


def test_json_conversion(tmp_path):
    obj = {"b": np.float64(1.5), "a": [np.int32(2), complex(1, -1)], "c": math.inf}
    assert jsonable(obj) == {"b": 1.5, "a": [2, {"re": 1.0, "im": -1.0}], "c": "inf"}
    text = write_json(tmp_path / "x.json", obj).read_text()
    assert text.index('"a"') < text.index('"b"')


# ------------------------------------------------------------- validation

def test_empty_parameters_list_missing_keys():
    with pytest.raises(cli.SpecError) as exc:
        cli.validate("fiber-run", {})
    msgs = exc.value.messages
    assert {"missing required key 'DeltaGamma_per_m'", "missing required key 'ee'"} <= set(msgs)


def test_unknown_key_rejected():
    with pytest.raises(cli.SpecError, match="unknown key 'speed'"):
        cli.validate("mode-solve", {"speed": 1.0})


def test_three_level_needs_one_field_ratio():
    with pytest.raises(cli.SpecError, match="exactly one"):
        cli.validate("encircle", {"F1_au": 2e-3})
    with pytest.raises(cli.SpecError, match="exactly one"):
        cli.validate("encircle", {"F1_au": 2e-3, "F2_au": 1e-3, "eta": 0.5})
    p = cli.validate("encircle", {"F1_au": 2e-3, "eta": 0.5})
    assert p["T_loop_au"] == 3e5


def test_type_errors():
    with pytest.raises(cli.SpecError) as exc:
        cli.validate("fiber-run", {"DeltaGamma_per_m": "big", "phi_t_per_m": True, "length_m": math.inf,
                                   "ee": 0.0, "n_out": 1.5})
    assert len(exc.value.messages) == 4


def test_enum_values():
    with pytest.raises(cli.SpecError):
        cli.validate("stability", {"F1_au": 1e-3, "eta": 1.0, "mode": "twist", "values": [1.0]})
    with pytest.raises(cli.SpecError):
        cli.validate("fiber-run", {"DeltaGamma_per_m": 1.0, "phi_t_per_m": 1.0, "length_m": 1.0, "ee": 0.0,
                                   "input": "diagonal"})
    with pytest.raises(cli.SpecError):
        cli.validate("nope", {})


def test_load_spec_checks(tmp_path):
    p = write_spec(tmp_path, 'kind = "fiber-run"\nextra = 1\n')
    with pytest.raises(cli.SpecError) as exc:
        cli.load_spec(p, "mode-solve")
    assert len(exc.value.messages) == 2
    with pytest.raises(cli.SpecError):
        cli.load_spec(tmp_path / "missing.toml", "mode-solve")


def test_axis_forms():
    assert cli.axis_values("ee", [0.1, 0.2]) == [0.1, 0.2]
    assert cli.axis_values("ee", {"start": 0, "stop": 1, "num": 3}) == [0.0, 0.5, 1.0]
    with pytest.raises(cli.SpecError):
        cli.axis_values("ee", {"start": 0})


# -------------------------------------------------------------------- main

def test_empty_spec_exit_code(tmp_path, capsys):
    p = write_spec(tmp_path, "[parameters]\n")
    rc = cli.main(["encircle", "--spec", str(p), "--out", str(tmp_path / "o")])
    assert rc == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "validation"
    assert "missing required key 'F1_au'" in err["messages"]


def test_mode_solve_outputs(tmp_path):
    p = write_spec(tmp_path, "[parameters]\n")
    out = tmp_path / "o"
    assert cli.main(["mode-solve", "--spec", str(p), "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["single_mode"] and s["V"] < 2.405
    m = json.loads((out / "manifest.json").read_text())
    assert m["kind"] == "mode-solve" and "wall_time_s" in m and m["version"]


def test_multimode_geometry_is_validation_error(tmp_path, capsys):
    p = write_spec(tmp_path, "[parameters]\nr_core_m = 3e-6\n")
    assert cli.main(["mode-solve", "--spec", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "multi-mode" in capsys.readouterr().err


def test_runtime_error_exit_code(tmp_path, monkeypatch, capsys):
    def boom(p, out):
        raise RuntimeError("solver exploded")
    monkeypatch.setitem(cli.RUNNERS, "mode-solve", boom)
    p = write_spec(tmp_path, "[parameters]\n")
    assert cli.main(["mode-solve", "--spec", str(p), "--out", str(tmp_path / "o")]) == 2
    assert json.loads(capsys.readouterr().err.splitlines()[0])["error"] == "runtime"


def test_bad_worker_env(tmp_path, monkeypatch):
    monkeypatch.setenv("ENANTIO_EP_WORKERS", "many")
    p = write_spec(tmp_path, "[parameters]\n")
    assert cli.main(["mode-solve", "--spec", str(p), "--out", str(tmp_path / "o")]) == 1
    assert cli.main(["mode-solve", "--spec", str(p), "--out", str(tmp_path / "o"), "--workers", "0"]) == 1


def test_run_is_byte_stable(tmp_path):
    p = write_spec(tmp_path, FIBER_PARAMS.format(ee=-0.01))
    for d in ("a", "b"):
        assert cli.main(["fiber-run", "--spec", str(p), "--out", str(tmp_path / d)]) == 0
    for f in ("trace.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    head = (tmp_path / "a" / "trace.csv").read_text().splitlines()[0]
    assert head.startswith("z_m,P,xi")


SWEEP = FIBER_PARAMS.format(ee=0.0) + """
[sweep.axes]
ee = {start = -0.02, stop = 0.02, num = 5}
photoelastic = [0.0, 0.1]
"""


def test_sweep_worker_independence(tmp_path, monkeypatch):
    p = write_spec(tmp_path, SWEEP)
    assert cli.main(["fiber-run", "--spec", str(p), "--out", str(tmp_path / "w1"), "--workers", "1"]) == 0
    monkeypatch.setenv("ENANTIO_EP_WORKERS", "2")
    assert cli.main(["fiber-run", "--spec", str(p), "--out", str(tmp_path / "w2")]) == 0
    a = (tmp_path / "w1" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "w2" / "sweep.csv").read_bytes()
    lines = a.decode().splitlines()
    assert lines[0].startswith("ee,photoelastic,status,")
    assert len(lines) == 11
    assert json.loads((tmp_path / "w2" / "manifest.json").read_text())["workers"] == 2


def test_one_point_sweep_equals_run(tmp_path):
    p = write_spec(tmp_path, FIBER_PARAMS.format(ee=0.0) + "[sweep.axes]\nee = [0.01]\n")
    assert cli.main(["fiber-run", "--spec", str(p), "--out", str(tmp_path / "s")]) == 0
    q = write_spec(tmp_path, FIBER_PARAMS.format(ee=0.01), "single.toml")
    assert cli.main(["fiber-run", "--spec", str(q), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "s" / "points" / "00000" / "trace.csv").read_bytes() == \
        (tmp_path / "r" / "trace.csv").read_bytes()
    assert (tmp_path / "s" / "points" / "00000" / "summary.json").read_bytes() == \
        (tmp_path / "r" / "summary.json").read_bytes()


def test_sweep_records_point_failures(tmp_path):
    p = write_spec(tmp_path, "[parameters]\n[sweep.axes]\nr_core_m = [0.5e-6, 3e-6]\n")
    assert cli.main(["mode-solve", "--spec", str(p), "--out", str(tmp_path / "o")]) == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert len(man["failures"]) == 1 and man["failures"][0]["index"] == 1
    rows = (tmp_path / "o" / "sweep.csv").read_text().splitlines()
    assert rows[1].split(",")[1] == "ok" and rows[2].split(",")[1] == "error"


def test_sweep_rejects_unknown_axis(tmp_path):
    p = write_spec(tmp_path, "[parameters]\n[sweep.axes]\nwidth = [1.0]\n")
    assert cli.main(["mode-solve", "--spec", str(p), "--out", str(tmp_path / "o")]) == 1


def test_stabilize_cd_run(tmp_path):
    out = tmp_path / "cd"
    s = cli.run("stabilize-cd", {"Omega_d_au": 2.5e-4, "epsilon": 1 / 137.035999,
                                 "Gamma_over_Omega_d": 3.5, "T_end_fs": 1700.0, "n_out": 200}, out)
    assert 0.15 < s["CD_at_T"] < 0.25
    assert s["Gamma_EP_L_au"] < 3.5 * 2.5e-4 > s["Gamma_EP_R_au"]
    assert list(read_csv(out / "cd.csv")) == ["t_fs", "P_R", "P_L", "CD"]


def test_ep_map_fiber(tmp_path):
    s = cli.run("ep-map", {"system": "fiber", "grid_n": 9, "F1_au": 1.0, "eta": 1.0}, tmp_path)
    assert s["ee+0_ep0_phi_t_per_m"] == pytest.approx(-1.5 * 2.104)
    g = json.loads((tmp_path / "gap_map_ee+0.json").read_text())
    assert np.array(g["gap_per_m"]).shape == (9, 9)


def test_ep_map_three_level_sweep(tmp_path):
    p = write_spec(tmp_path, "[parameters]\nF1_au = 2e-3\ngrid_n = 16\n[sweep.axes]\neta = [0.0, 0.5, 1.0]\n")
    assert cli.main(["ep-map", "--spec", str(p), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "sweep.csv")
    assert np.allclose(rows["R_branch0_Delta_au"][0], 0.0, atol=1e-20)
    assert np.allclose(rows["R_branch0_F3_au"][2], 0.0, atol=1e-20)
    assert np.allclose(rows["R_branch0_Delta_au"], -rows["L_branch0_Delta_au"], rtol=1e-12, atol=1e-20) or \
        np.allclose(rows["R_branch0_Delta_au"], -rows["L_branch1_Delta_au"], rtol=1e-12, atol=1e-20)
