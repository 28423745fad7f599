import csv
import json

import numpy as np
import pytest

from solitondyn.cli import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main
from solitondyn.config import ExperimentConfig, load_config, parse_config
from solitondyn.errors import ConfigError

SMALL_1D = """
[experiment]
equation = gp1d
mode = theorem1
[potential]
name = cos
[grid]
n = 512
box = 60
[run]
h_list = {h_list}
dt = 0.005
interval = 0.5
horizon_rule = fixed
T = {T}
a0 = 0.5
"""


def write_cfg(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# ---------------------------------------------------------------------------
# configuration


def test_defaults_validate():
    cfg = load_config(None)
    assert cfg.equation == "gp1d" and cfg.mode == "theorem1"
    assert (cfg.n, cfg.box) == (4096, 200.0)
    assert cfg.h_list == [0.1, 0.05, 0.025]


def test_grid_default_follows_equation():
    cfg = parse_config("[experiment]\nequation = hartree3d\n[run]\ndt = 0.02\ninterval = 0.5\n")
    assert (cfg.n, cfg.box) == (128, 40.0)
    assert cfg.dims == 3


def test_parse_full():
    cfg = parse_config(SMALL_1D.format(h_list="0.2, 0.1", T=2.0))
    assert cfg.h_list == [0.2, 0.1]
    assert cfg.n == 512 and cfg.box == 60.0
    assert cfg.horizon_rule == "fixed" and cfg.T == 2.0


def test_potential_parameters():
    cfg = parse_config("[potential]\nname = gaussian\namplitude = 2.5\nk = 1, 0\n")
    assert cfg.potential == "gaussian"
    assert cfg.potential_params == {"amplitude": 2.5, "k": [1.0, 0.0]}


@pytest.mark.parametrize(
    "text",
    [
        "[nonsense]\nx = 1\n",
        "[run]\nbogus = 1\n",
        "[run]\ndt = abc\n",
        "[run]\nh_list = 0.1, x\n",
        "[run]\nh_list = 1.5\n",
        "[run]\ndelta = 0.7\n",
        "[run]\ndt = 0.003\ninterval = 0.5\n",
        "[run]\nhorizon_rule = sometimes\n",
        "[experiment]\nequation = kdv\n",
        "[experiment]\nmode = theorem3\n",
        "[grid]\nn = 511\nbox = 10\n",
        "[grid]\nn = 64\nbox = -1\n",
        "[ode_compare]\ndelta_list = 0, 0.9\n",
        "not an ini file",
    ],
)
def test_invalid_config_raises(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


def test_horizon_rules():
    cfg = ExperimentConfig(horizon_rule="theorem", c1=1.0, c2=1.0, delta=0.0, interval=0.5)
    assert cfg.horizon(0.1) == pytest.approx(10.0)
    # rounded down to whole intervals
    assert cfg.horizon(0.3) == pytest.approx(3.0)
    cfg.delta = 0.5
    T = 1 / 0.05 + 0.5 * np.log(20) / 0.05
    assert cfg.horizon(0.05) == pytest.approx(np.floor(T / 0.5) * 0.5)
    fixed = ExperimentConfig(horizon_rule="fixed", T=7.3, interval=0.5)
    assert fixed.horizon(0.1) == pytest.approx(7.0)


def test_eps0_rules():
    t1 = ExperimentConfig(mode="theorem1")
    assert t1.eps0_for(0.1) == 0.0
    t2 = ExperimentConfig(mode="theorem2", eps0_coef=2.0, eps0_power=0.6)
    assert t2.eps0_for(0.1) == pytest.approx(2.0 * 0.1**0.6)
    t2.eps0 = 0.01
    assert t2.eps0_for(0.1) == 0.01


# ---------------------------------------------------------------------------
# command line


def test_cli_bad_config_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "[run]\nunknown_key = 3\n")
    assert main(["ground-state", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_cli_bad_threads(tmp_path):
    assert main(["ground-state", "--threads", "0", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_cli_ground_state_gp(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "[grid]\nn = 1024\nbox = 60\n")
    out = tmp_path / "gs"
    assert main(["ground-state", "--config", cfg, "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "ground_state.json").read_text())
    assert summary["lambda"] == pytest.approx(0.5, abs=1e-10)
    assert summary["mass"] == pytest.approx(2.0, abs=1e-8)
    assert "lambda = 0.5" in capsys.readouterr().out
    data = np.loadtxt(out / "ground_state_1d.txt")
    assert data.shape == (1024, 2)


def test_cli_solver_error_exit_code(tmp_path, capsys):
    # dt violates the stability bound for this grid
    text = SMALL_1D.format(h_list="0.2", T=1.0).replace("dt = 0.005", "dt = 0.05")
    cfg = write_cfg(tmp_path, text)
    assert main(["evolve", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_SOLVER
    assert "solver error" in capsys.readouterr().err


def test_cli_evolve_outputs(tmp_path):
    cfg = write_cfg(tmp_path, SMALL_1D.format(h_list="0.2", T=2.0))
    out = tmp_path / "ev"
    assert main(["evolve", "--config", cfg, "--out", str(out)]) == EXIT_OK
    summary = json.loads((out / "evolve_summary.json").read_text())
    assert summary["T"] == pytest.approx(2.0)
    assert 0 < summary["sup_err_eff"] < 0.5
    with open(out / "observer_h0.2.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5
    assert float(rows[0]["err_eff"]) < 1e-10
    assert (out / "trajectory_h0.2.csv").exists()
    assert (out / "modulation_h0.2.csv").exists()


def test_cli_single_h_sweep_reports_na(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL_1D.format(h_list="0.2", T=1.0))
    out = tmp_path / "sw"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "sweep_summary.json").read_text())
    assert report["slope"] == "n/a"
    assert "n/a" in capsys.readouterr().out


def test_cli_sweep_is_deterministic(tmp_path):
    text = SMALL_1D.format(h_list="0.2", T=1.0).replace("mode = theorem1", "mode = theorem2")
    cfg = write_cfg(tmp_path, text)
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        main(["sweep", "--config", cfg, "--out", str(out), "--seed", "7"])
        outs.append((out / "sweep.csv").read_bytes())
        outs.append((out / "observer_h0.2.csv").read_bytes())
    assert outs[0] == outs[2] and outs[1] == outs[3]


def test_cli_sweep_acceptance_failure(tmp_path, capsys):
    # a fixed perturbation dominates both runs, so err/(eps0 + h^2) differs by
    # about (1 + 1)/(0.3 + 0.0025) between the two members
    text = SMALL_1D.format(h_list="1.0, 0.05", T=0.5).replace("mode = theorem1", "mode = theorem2")
    cfg = write_cfg(tmp_path, text + "eps0 = 0.3\n")
    out = tmp_path / "sw"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == EXIT_ACCEPTANCE
    report = json.loads((out / "sweep_summary.json").read_text())
    assert report["passed"] is False
    assert report["prefactor_spread"] > 2.0
    assert len(report["members"]) == 2


def test_cli_ode_compare_zero_forcing(tmp_path):
    text = SMALL_1D.format(h_list="0.2, 0.1", T=1.0) + "[ode_compare]\ndelta_list = 0\ndt = 0.01\n"
    cfg = write_cfg(tmp_path, text)
    out = tmp_path / "ode"
    code = main(["ode-compare", "--config", cfg, "--out", str(out)])
    assert code in (EXIT_OK, EXIT_ACCEPTANCE)
    data = json.loads((out / "ode_compare.json").read_text())
    assert len(data["runs"]) == 2
    for run in data["runs"]:
        assert np.isfinite(run["sup_a"]) and np.isfinite(run["sup_v"])


def test_cli_spectral_report(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "[spectral]\nn = 512\nbox = 50\nn_basis = 50\n")
    out = tmp_path / "sp"
    assert main(["spectral-report", "--config", cfg, "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "spectral_report.json").read_text())
    assert report["kernel"]["Lminus_eta"] < 1e-8
    assert report["coercivity"]["constant"] > 0
    assert "coercivity constant" in capsys.readouterr().out
