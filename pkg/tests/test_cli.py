import json
import subprocess
import sys

import pytest

from delightpg import __version__, cli


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def run(argv):
    return cli.main([str(a) for a in argv])


SMALL_FLOW = {"max_time": 200.0, "gates": ["pg", "eg", "dg"]}


def test_flow_demo_outputs(tmp_path):
    cfg = write_cfg(tmp_path, SMALL_FLOW)
    assert run(["flow", "--config", cfg, "--out", tmp_path / "o", "--seed", 7]) == 0
    names = sorted(p.name for p in (tmp_path / "o").iterdir())
    assert names == ["flow_dg.csv", "flow_eg.csv", "flow_pg.csv", "flow_report.json", "flow_summary.csv"]
    rep = json.loads((tmp_path / "o" / "flow_report.json").read_text())
    assert rep["version"] == __version__ and rep["seed"] == 7 and rep["command"] == "flow"
    assert rep["config"]["rewards"] == [1.0, 0.9, 0.1] and rep["config"]["max_time"] == 200.0
    header = (tmp_path / "o" / "flow_summary.csv").read_text().splitlines()[0]
    assert header == "gate,corner,escaped,escape_time,escape_bound"
    traj = (tmp_path / "o" / "flow_pg.csv").read_text().splitlines()
    assert traj[0] == "step,time,theta_0,theta_1,theta_2,pi_0,pi_1,pi_2,value"
    assert len(traj) == 202


def test_flags_override_config(tmp_path):
    cfg = write_cfg(tmp_path, SMALL_FLOW)
    assert run(["flow", "--config", cfg, "--out", tmp_path, "--gate", "eg", "--dt", 0.5, "--max-time", 10]) == 0
    rep = json.loads((tmp_path / "flow_report.json").read_text())
    assert rep["config"]["gates"] == ["eg"] and rep["config"]["dt"] == 0.5
    assert len((tmp_path / "flow_eg.csv").read_text().splitlines()) == 22


def test_unknown_config_key_is_rejected(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"max_tiem": 5.0})
    assert run(["flow", "--config", cfg, "--out", tmp_path]) == 1
    assert "max_tiem" in capsys.readouterr().err


def test_inapplicable_flag_is_rejected(tmp_path):
    assert run(["counterexample", "--dt", 0.1, "--out", tmp_path]) == 1
    assert run(["verify", "--gate", "eg", "--out", tmp_path]) == 1


def test_bad_values_are_config_errors(tmp_path):
    assert run(["flow", "--config", write_cfg(tmp_path, {"pi0": [0.5, 0.6, 0.1]}), "--out", tmp_path]) == 1
    assert run(["mdp-run", "--gate", "pg", "--out", tmp_path]) == 1
    assert run(["flow", "--config", str(tmp_path / "missing.json")]) == 1
    assert run(["nonsense"]) == 1


def test_numerical_abort_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, {"rewards": [1e300, -1e300], "pi0": [0.5, 0.5], "gates": ["pg"],
                               "dt": 1e300, "max_time": 1e301})
    with pytest.warns(UserWarning):
        assert run(["flow", "--config", cfg, "--out", tmp_path]) == 3


def test_verification_failure_exit_code(tmp_path, monkeypatch):
    failing = {"suite": "bandit", "passed": False,
               "checks": [{"name": "stub", "passed": False, "gating": True}]}
    monkeypatch.setattr(cli, "run_suite", lambda name, seed, **kw: failing)
    assert run(["verify", "--out", tmp_path]) == 2
    rep = json.loads((tmp_path / "verify_bandit.json").read_text())
    assert rep["results"]["passed"] is False


def test_counterexample_outputs(tmp_path):
    cfg = write_cfg(tmp_path, {"n_grid": 101, "etas": [1.0]})
    assert run(["counterexample", "--config", cfg, "--out", tmp_path]) == 0
    rep = json.loads((tmp_path / "counterexample.json").read_text())
    fp = rep["results"]["fixed_points"]
    assert fp["pg"]["roots"] == []
    assert fp["eg"]["roots"][0] == pytest.approx(1 / 11, abs=1e-12)
    assert rep["results"]["ablation_r_s2_a1_plus_100"]["roots"] == []
    lines = (tmp_path / "counterexample_grid.csv").read_text().splitlines()
    assert lines[0] == "p,F_PG,F_EG,F_DG" and len(lines) == 102


def test_sweep_outputs(tmp_path):
    cfg = write_cfg(tmp_path, {"gaps": [0.5, 0.2], "max_time": 1e5})
    assert run(["sweep", "--config", cfg, "--out", tmp_path]) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "method,gap,inv_gap,escape_time,escaped" and len(lines) == 5
    rep = json.loads((tmp_path / "sweep_summary.json").read_text())
    assert set(rep["results"]["slopes"]["all"]) == {"pg", "dg"}


def test_mdp_run_outputs(tmp_path):
    cfg = write_cfg(tmp_path, {"n_states": 3, "n_actions": 2, "gamma": 0.8, "max_iters": 50_000})
    assert run(["mdp-run", "--config", cfg, "--out", tmp_path, "--seed", 3]) == 0
    rep = json.loads((tmp_path / "mdp_run.json").read_text())
    assert rep["results"]["converged"]
    assert rep["config"]["generated_mdp"]["gamma"] == 0.8
    assert (tmp_path / "mdp_run.csv").read_text().splitlines()[0] == "t,delta,d_min"


def test_mdp_run_reads_saved_mdp(tmp_path):
    cfg = write_cfg(tmp_path, {"n_states": 3, "n_actions": 2, "gamma": 0.8})
    assert run(["mdp-run", "--config", cfg, "--out", tmp_path / "a", "--seed", 3]) == 0
    m = json.loads((tmp_path / "a" / "mdp_run.json").read_text())["config"]["generated_mdp"]
    path = tmp_path / "m.json"
    path.write_text(json.dumps(m))
    assert run(["mdp-run", "--config", write_cfg(tmp_path, {"mdp": str(path)}, "c2.json"),
                "--out", tmp_path / "b"]) == 0
    a = json.loads((tmp_path / "a" / "mdp_run.json").read_text())["results"]
    b = json.loads((tmp_path / "b" / "mdp_run.json").read_text())["results"]
    assert a["iterations"] == b["iterations"] and a["optimal_actions"] == b["optimal_actions"]


@pytest.mark.parametrize("argv", [
    ["verify", "--suite", "counterexample"],
    ["verify", "--suite", "bandit"],
    ["mdp-run", "--config", "SMALL"],
    ["flow", "--config", "FLOW"],
])
def test_same_seed_gives_identical_bytes(tmp_path, argv):
    paths = {"SMALL": write_cfg(tmp_path, {"n_states": 3, "n_actions": 2}, "small.json"),
             "FLOW": write_cfg(tmp_path, SMALL_FLOW, "flow.json")}
    argv = [paths.get(a, a) for a in argv]
    out = tmp_path / "run"
    assert run(argv + ["--seed", 11, "--out", out]) == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert first
    assert run(argv + ["--seed", 11, "--out", out]) == 0
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "delightpg.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == __version__
