import json
import math
import subprocess
import sys

import pytest

from insulation_lab.cli import RunConfig, execute, main, parse_m_expression, render_csv, render_json
from insulation_lab.errors import ValidationError


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_energy_ball_json(capsys):
    code, out, _ = run(["energy-ball", "--n", "2", "--R", "1", "--f", "1", "--m", "1"], capsys)
    assert code == 0
    res = json.loads(out)["results"][0]
    assert res["u_R"] == pytest.approx(1 / (4 * math.pi), rel=1e-11)
    assert res["h_m"] == pytest.approx(1 / (2 * math.pi), rel=1e-11)


def test_missing_m_is_usage_error(capsys):
    code, _, err = run(["energy-ball", "--f", "1"], capsys)
    assert code == 2 and "--m" in err


def test_negative_source_is_validation_error(capsys):
    code, _, err = run(["energy-ball", "--f", "1,0,-2", "--m", "1"], capsys)
    assert code == 2 and "r = " in err
    code, _, _ = run(["energy-ball", "--f", "1,0,-1", "--m", "1"], capsys)
    assert code == 0


def test_stability_constant_source(capsys):
    code, out, _ = run(["stability", "--n", "2", "--R", "1", "--f", "1", "--m", "1", "--smax", "12"], capsys)
    assert code == 0
    res = json.loads(out)["results"][0]
    assert res["stable"] and res["worst_mode"] == 1
    assert abs(res["modes"][0]["q_value"]) < 1e-12
    assert len(res["modes"]) == 12


def test_stability_increasing_source_unstable(capsys):
    code, out, _ = run(["stability", "--f", "1,0,1", "--m", "0.1,1,10"], capsys)
    assert code == 0
    assert [r["stable"] for r in json.loads(out)["results"]] == [False, False, False]


def test_stability_empty_mode_range(capsys):
    code, _, _ = run(["stability", "--f", "1", "--m", "1", "--smax", "0"], capsys)
    assert code == 2


def test_eigen_grid_to_infinity(capsys):
    code, out, _ = run(["eigen", "--n", "2", "--R", "1", "--m-grid", "log:1.01m0:1e6:40"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["m_lambda_increasing"]
    assert len(rep["table"]) == 40
    assert rep["table"][-1]["m_lambda"] == pytest.approx(4 * math.pi, rel=1e-3)


def test_eigen_dimension_error(capsys):
    code, _, err = run(["eigen", "--n", "3", "--R", "1", "--fs"], capsys)
    assert code == 2 and "n = 2" in err


def test_eigen_scaling_of_m0(capsys):
    _, out1, _ = run(["eigen", "--R", "1", "--m-grid", "2m0"], capsys)
    _, out2, _ = run(["eigen", "--R", "2", "--m-grid", "2m0"], capsys)
    assert json.loads(out2)["m0"] / json.loads(out1)["m0"] == pytest.approx(4.0, rel=1e-10)


def test_eigen_below_threshold_is_regime_failure(capsys):
    code, _, err = run(["eigen", "--m-grid", "0.5m0"], capsys)
    assert code == 3 and "m0" in err


def test_eigen_csv_rows_per_mode(capsys):
    code, out, _ = run(["eigen", "--m-grid", "2m0,3m0", "--fs", "--smax", "4", "--format", "csv"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("ball.n,ball.R,eigen.m,mode.s")
    assert len(lines) == 1 + 2 * 4
    assert "\r" not in out


def test_fem_verify_energy(capsys):
    code, out, _ = run(["fem-verify", "--problem", "energy", "--s", "2", "--f", "1", "--m", "1"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["all_passed"]


def test_fem_verify_bad_resolution(capsys):
    code, _, _ = run(["fem-verify", "--s", "3", "--n-theta", "200"], capsys)
    assert code == 2


def test_fem_verify_eigen_reports_both_regimes(capsys):
    code, out, _ = run(
        ["fem-verify", "--problem", "eigen", "--m", "0.5m0,1.5m0", "--n-r", "16", "--n-theta", "64"], capsys
    )
    assert code == 0
    checks = json.loads(out)["checks"]
    regimes = {c["regime"] for c in checks}
    assert regimes == {"broken", "uniform"}
    nonuniform = [c for c in checks if c["check"].startswith("h_m nonuniform")][0]
    assert nonuniform["passed"]


def test_m_expressions():
    m0 = lambda: 2.0  # noqa: E731
    assert parse_m_expression("1.5", m0) == [1.5]
    assert parse_m_expression("2m0, m0, 0.5*m0", m0) == [4.0, 2.0, 1.0]
    grid = parse_m_expression("log:1:100:3", m0)
    assert grid == pytest.approx([1, 10, 100])
    assert parse_m_expression("lin:1m0:3m0:3", m0) == pytest.approx([2, 4, 6])
    for bad in ["", "abc", "log:1:2", "log:-1:2:3", "-1", "lin:1:2:0"]:
        with pytest.raises(ValidationError):
            parse_m_expression(bad, m0)


def test_m0_not_computed_unless_needed():
    calls = []

    def m0():
        calls.append(1)
        return 1.0

    parse_m_expression("1,2", m0)
    assert not calls


def test_run_config_round_trip():
    cfg = RunConfig(command="stability", f="1,0,1", m="0.1,1", s_max=5, R=2.5)
    text = cfg.to_text()
    assert RunConfig.parse(text) == cfg
    assert RunConfig.parse(text).to_text() == text
    messy = "# comment\ncommand = stability\n  R=2.5\nf = 1,0,1\nm = 0.1,1\ns-max = 5\n"
    assert RunConfig.parse(messy).to_text() == text


@pytest.mark.parametrize(
    "text", ["n = 2\n", "command = stability\nbogus = 1\n", "command = eigen\nn = two\n", "command = eigen\nfs = maybe\n"]
)
def test_run_config_errors(text):
    with pytest.raises(ValidationError):
        RunConfig.parse(text)


def test_validate_rejects_bad_fields():
    for kw in [dict(command="nope"), dict(command="eigen", format="xml"), dict(command="eigen", dt=1.0)]:
        with pytest.raises(ValidationError):
            RunConfig(**kw).validate()


def test_run_subcommand_and_output_file(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.txt"
    out_path = tmp_path / "out.json"
    cfg_path.write_text(RunConfig(command="energy-ball", m="1,2", output=str(out_path)).to_text())
    code, _, _ = run(["run", str(cfg_path)], capsys)
    assert code == 0
    assert len(json.loads(out_path.read_text())["results"]) == 2


def test_deterministic_output(monkeypatch):
    cfg = RunConfig(command="eigen", m="log:1.5m0:100:9", fs=True, s_max=3)
    monkeypatch.setenv("INSULATION_LAB_THREADS", "1")
    serial = execute(cfg)
    monkeypatch.setenv("INSULATION_LAB_THREADS", "4")
    assert execute(cfg) == serial


def test_float_formatting():
    text = render_json({"x": 1 / 3, "y": [2.0, float("inf")], "z": None, "b": True})
    assert '"x": 0.333333333333' in text
    assert '"Infinity"' not in text and "inf" in text
    csv_text = render_csv([{"a": 1.0, "b": None}, {"a": 2.5, "c": False}])
    assert csv_text == "a,b,c\n1.0,,\n2.5,,false\n"


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "insulation_lab", "energy-ball", "--m", "1", "--format", "csv"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("ball.n,ball.R,solution.m")
