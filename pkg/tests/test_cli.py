import csv
import json

import pytest

from sgdescape import cli
from sgdescape import config as cfgmod
from sgdescape.errors import ConfigError


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = cli.main([*args, "--output-dir", str(out)])
    return code, out


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_simulate_gradient_flow_rows(tmp_path):
    ini = tmp_path / "gf.ini"
    ini.write_text("[landscape]\ndiag = 2\n[dynamics]\ndynamics = gradient_flow\neta = 0.1\nhorizon_steps = 2\n")
    code, out = run(tmp_path, "simulate", "--config", str(ini))
    assert code == 0
    r = rows(out / "trajectory.csv")
    assert len(r) == 3
    assert list(r[0]) == ["step", "time", "theta_0"]


def test_simulate_header_and_values(tmp_path):
    ini = tmp_path / "gf.ini"
    ini.write_text("[landscape]\ndiag = 2\n[dynamics]\ndynamics = gradient_flow\neta = 0.1\n"
                   "horizon_steps = 2\ninitial = 1.0\n")
    code, out = run(tmp_path, "simulate", "--config", str(ini))
    assert code == 0
    assert (out / "trajectory.csv").read_text() == ("step,time,theta_0\n0,0.0,1.0\n1,0.1,0.8\n"
                                                    "2,0.2,0.64\n")


def test_unknown_key_exit_code(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[dynamics]\netaa = 0.1\n")
    code, out = run(tmp_path, "simulate", "--config", str(ini))
    assert code == 2
    assert "etaa" in capsys.readouterr().err
    assert not out.exists()


@pytest.mark.parametrize("text", ["[nosuch]\nx = 1\n", "[dynamics]\neta = abc\n", "[dynamics]\nbatch = 0.5\n",
                                  "[landscape]\ndiag = 1, -1\n", "[landscape]\nhessian = 1, 2, 3\n",
                                  "[dynamics]\ndynamics = sgd\n"])
def test_config_errors_exit_2(tmp_path, text):
    ini = tmp_path / "bad.ini"
    ini.write_text(text)
    code, _ = run(tmp_path, "simulate", "--config", str(ini))
    assert code == 2


def test_missing_config_is_io_error(tmp_path):
    code, _ = run(tmp_path, "simulate", "--config", str(tmp_path / "missing.ini"))
    assert code == 4


def test_numerical_failure_exit_3(tmp_path):
    ini = tmp_path / "blow.ini"
    ini.write_text("[landscape]\ndiag = 100\n[dynamics]\ndynamics = gradient_flow\neta = 10\n"
                   "horizon_steps = 1000\ninitial = 1\n")
    code, out = run(tmp_path, "simulate", "--config", str(ini))
    assert code == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exit_code"] == 3 and manifest["status"] == "failed"


def test_same_seed_identical_bytes(tmp_path):
    a = run(tmp_path, "simulate", "--preset", "proxy1d", "--seed", "5", name="a")[1]
    b = run(tmp_path, "simulate", "--preset", "proxy1d", "--seed", "5", name="b")[1]
    c = run(tmp_path, "simulate", "--preset", "proxy1d", "--seed", "6", name="c")[1]
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
    assert (a / "trajectory.csv").read_bytes() != (c / "trajectory.csv").read_bytes()


def test_all_censored_flag(tmp_path):
    ini = tmp_path / "gf.ini"
    ini.write_text("[dynamics]\ndynamics = gradient_flow\n[trials]\nn_trials = 10\nmax_steps = 20\n")
    code, out = run(tmp_path, "exit-time", "--config", str(ini))
    assert code == 0
    assert rows(out / "exit_stats.csv")[0]["unreliable"] == "true"


def test_start_outside_mean_zero(tmp_path):
    code, out = run(tmp_path, "exit-time", "--preset", "start_outside")
    assert code == 0
    stats = rows(out / "exit_stats.csv")[0]
    assert float(stats["mean_exit_time"]) == 0.0
    assert list(rows(out / "exit_trials.csv")[0]) == ["trial", "exited", "exit_step", "exit_time"]


def test_exit_time_oracle_line(tmp_path, capsys):
    ini = tmp_path / "small.ini"
    ini.write_text("[trials]\nn_trials = 2000\n")
    code, out = run(tmp_path, "exit-time", "--preset", "dynkin1d", "--config", str(ini))
    assert code == 0
    assert "dynkin oracle" in capsys.readouterr().out
    oracle = rows(out / "oracle.csv")[0]
    assert abs(float(oracle["dynkin_mean_exit_time"]) - 7.059105654722091) < 1e-9


def test_quasipot_proxy_preset(tmp_path):
    code, out = run(tmp_path, "quasipot", "--preset", "proxy1d")
    assert code == 0
    q = rows(out / "quasipot.csv")[0]
    assert abs(float(q["proxy_v0"]) - 2.0) <= 0.02
    assert list(rows(out / "action.csv")[0]) == ["T", "boundary_index", "action", "converged"]


def test_quasipot_isotropic_preset(tmp_path):
    code, out = run(tmp_path, "quasipot", "--preset", "isotropic_sgd")
    assert code == 0
    q = rows(out / "quasipot.csv")[0]
    assert abs(float(q["v0"]) - 2**0.5) <= 0.01 * 2**0.5
    assert float(q["gap"]) <= 1e-3 * float(q["proxy_v0"])


def test_hjcheck_presets(tmp_path):
    for preset, check in [("hj_analytic", lambda r: float(r["max_scaled_residual"]) <= 1e-10),
                          ("hj_zero", lambda r: float(r["max_abs_residual"]) == 0.0),
                          ("hj_wrong", lambda r: float(r["max_abs_residual"]) > 0.0)]:
        code, out = run(tmp_path, "hjcheck", "--preset", preset, name=preset)
        assert code == 0
        assert check(rows(out / "hjcheck.csv")[0]), preset


def test_hjcheck_wrong_field_closed_form(tmp_path):
    code, out = run(tmp_path, "hjcheck", "--preset", "hj_wrong")
    for r in rows(out / "residuals.csv"):
        g0, g1 = 2.0 * float(r["theta_0"]), 0.5 * float(r["theta_1"])
        assert abs(float(r["residual"]) + 0.5 * (g0 * g0 + g1 * g1)) <= 1e-12


def test_validate_domain(tmp_path):
    code, out = run(tmp_path, "validate-domain", "--preset", "validate")
    assert code == 0 and rows(out / "validation.csv")[0]["passed"] == "true"


SMALL_SWEEP = "[trials]\nn_trials = 200\n"


def test_sweep_outputs_and_plots(tmp_path):
    ini = tmp_path / "small.ini"
    ini.write_text(SMALL_SWEEP)
    code, out = run(tmp_path, "sweep", "--preset", "alpha_sweep", "--config", str(ini), "--emit-plots")
    assert code == 0
    assert list(rows(out / "summary.csv")[0])[:3] == ["slope", "intercept", "pearson_r"]
    assert list(rows(out / "sweep.csv")[0]) == ["swept_value", "regressor", "mean_exit_time",
                                                "ci_halfwidth", "n_censored"]
    svg = (out / "sweep_alpha.svg").read_text()
    assert "lambda_max^(-1/2)" in svg and "mean exit time" in svg
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["outputs"]) == {"sweep.csv", "summary.csv", "sweep_alpha.svg"}


def test_no_plots_by_default(tmp_path):
    ini = tmp_path / "small.ini"
    ini.write_text(SMALL_SWEEP)
    code, out = run(tmp_path, "proxy-ref", "--preset", "proxy_ref", "--config", str(ini))
    assert code == 0
    assert not list(out.glob("*.svg"))
    assert "cis_overlap" in rows(out / "summary.csv")[0]


def test_discretization_command(tmp_path):
    ini = tmp_path / "small.ini"
    ini.write_text("[trials]\nn_trials = 100\n[discretization]\nref_factor = 4\n")
    code, out = run(tmp_path, "discretization", "--preset", "discretization", "--config", str(ini),
                    "--emit-plots")
    assert code == 0
    assert len(rows(out / "discretization.csv")) == 4
    assert "slope" in rows(out / "summary.csv")[0]


def test_manifest_echoes_resolved_config(tmp_path):
    code, out = run(tmp_path, "quasipot", "--preset", "proxy1d")
    m = json.loads((out / "manifest.json").read_text())
    assert m["command"] == "quasipot" and m["status"] == "ok"
    assert m["config"]["action"]["path_nodes"] == 256
    assert m["config"]["landscape"]["minimizer"] == [0.0]
    assert m["outputs"] == ["action.csv", "path.csv", "quasipot.csv"]


def test_from_manifest_reproduces(tmp_path):
    ini = tmp_path / "small.ini"
    ini.write_text(SMALL_SWEEP)
    _, first = run(tmp_path, "sweep", "--preset", "eta_sweep", "--config", str(ini), "--seed", "9", name="one")
    code, second = run(tmp_path, "sweep", "--from-manifest", str(first / "manifest.json"), name="two")
    assert code == 0
    for name in ("sweep.csv", "summary.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_from_manifest_command_mismatch(tmp_path):
    _, first = run(tmp_path, "quasipot", "--preset", "proxy1d")
    code, _ = run(tmp_path, "simulate", "--from-manifest", str(first / "manifest.json"), name="x")
    assert code == 2


def test_thread_counts_give_identical_csv(cli):
    (cli.dir / "small.ini").write_text("[trials]\nn_trials = 300\n")
    outs = []
    for n in ("1", "4"):
        res = cli("exit-time", "--preset", "dynkin1d", "--config", "small.ini", "--threads", n,
                  "--output-dir", f"t{n}", env_extra={"NUMBA_NUM_THREADS": "4"})
        assert res.returncode == 0, res.stderr
        outs.append((cli.dir / f"t{n}" / "exit_trials.csv").read_bytes())
    assert outs[0] == outs[1]


def test_unknown_preset(tmp_path):
    code, _ = run(tmp_path, "simulate", "--preset", "nope")
    assert code == 2


def test_presets_all_parse():
    for name in cfgmod.PRESETS:
        cfg = cfgmod.resolve(cfgmod.merge_ini(cfgmod.defaults(), cfgmod.preset(name)))
        cfgmod.build_landscape(cfg)
        cfgmod.build_dynamics(cfg)


def test_hessian_row_major():
    cfg = cfgmod.merge_ini(cfgmod.defaults(), "[landscape]\nhessian = 2, 0.5, 0.5, 1\nminimizer = 1, 2\n")
    ls = cfgmod.build_landscape(cfgmod.resolve(cfg))
    assert ls.hessian.tolist() == [[2.0, 0.5], [0.5, 1.0]]


def test_hessian_and_diag_conflict():
    cfg = cfgmod.merge_ini(cfgmod.defaults(), "[landscape]\nhessian = 1\ndiag = 1\n")
    with pytest.raises(ConfigError):
        cfgmod.resolve(cfg)


def test_compensated_radius_in_config():
    cfg = cfgmod.resolve(cfgmod.merge_ini(cfgmod.defaults(), "[landscape]\nalpha = 4\nradius = 1\n"))
    assert cfgmod.effective_radius(cfg) == 0.5
    cfg["landscape"]["compensate_radius"] = False
    assert cfgmod.effective_radius(cfg) == 1.0
