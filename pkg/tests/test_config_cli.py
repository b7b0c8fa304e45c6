import json
import math
import subprocess
import sys

import numpy as np
import pytest
from scipy.special import digamma

from mmfou import cli
from mmfou.config import DEFAULTS, ENV_PREFIX, OVERRIDES, env_overrides, parse_config
from mmfou.errors import ValidationError
from mmfou.model import SMALL_LAG, ConsistencyWarning, ParameterVector
from mmfou.simulate import SamplePath, SimulationConfig, mmfou_path

MINIMAL = {"n": 3, "H": [0.3, 0.5, 0.7], "sigma": [0.5, 1, 1.5], "lambda": "exp_psi_1", "seed": 1}


@pytest.fixture(autouse=True)
def clean_env(monkeypatch, tmp_path):
    for flag in OVERRIDES:
        monkeypatch.delenv(ENV_PREFIX + flag, raising=False)
    monkeypatch.chdir(tmp_path)


# -- parse_config -----------------------------------------------------------------


def test_minimal_config():
    cfg = parse_config(MINIMAL)
    assert cfg.theta.lam == pytest.approx(0.561459, abs=1e-6)
    assert cfg.theta.H == (0.3, 0.5, 0.7) and cfg.theta.sigma == (0.5, 1.0, 1.5)
    assert cfg.N == DEFAULTS["N"] and cfg.T == 1.0 and cfg.mode == SMALL_LAG
    assert cfg.Ns == (200, 600, 1000) and cfg.m == 500
    # upper lambda bound follows H_inf
    assert cfg.space.lambda_bounds[1] == pytest.approx(math.exp(digamma(1.1)), rel=1e-14)


def test_lambda_bound_tracks_h_inf():
    a = parse_config({**MINIMAL, "space": {"H_bounds": [0.05, 0.95]}})
    b = parse_config({**MINIMAL, "space": {"H_bounds": [0.2, 0.95]}})
    assert b.space.lambda_bounds[1] > a.space.lambda_bounds[1]


def test_unsorted_H_reordered_with_warning():
    with pytest.warns(UserWarning, match="reordered"):
        cfg = parse_config({**MINIMAL, "H": [0.7, 0.3, 0.5], "sigma": [1.5, 0.5, 1]})
    assert cfg.theta.H == (0.3, 0.5, 0.7) and cfg.theta.sigma == (0.5, 1.0, 1.5)


@pytest.mark.parametrize("patch, key", [
    ({"sigma": [0.5, 0, 1.5]}, "sigma"),
    ({"bogus": 1}, "bogus"),
    ({"H": [0.3, 0.5, 1.0]}, "H"),
    ({"N": 0}, "N"),
    ({"seed": -4}, "seed"),
    ({"space": {"H_bound": [0.1, 0.9]}}, "space"),
    ({"mode": "fast"}, "mode"),
])
def test_schema_violations_name_key(patch, key):
    with pytest.raises(ValidationError, match=key if key != "bogus" else "<root>"):
        parse_config({**MINIMAL, **patch})


def test_inconsistent_theta_rejected():
    with pytest.raises(ValidationError):
        parse_config({**MINIMAL, "n": 2})
    with pytest.raises(ValidationError):
        parse_config({**MINIMAL, "sigma": [1.0, 1.0]})
    with pytest.raises(ValidationError):
        parse_config({"H": [0.5], "seed": 1})


def test_seed_required():
    with pytest.raises(ValidationError, match="seed"):
        parse_config({k: v for k, v in MINIMAL.items() if k != "seed"})
    assert parse_config({"n": 1}, require_seed=False).seed == 0


def test_lambda_above_bound_warns_only():
    with pytest.warns(ConsistencyWarning):
        cfg = parse_config({**MINIMAL, "lambda": 2.0, "space": {"lambda_bounds": [0.001, 0.5]}})
    assert cfg.theta.lam == 2.0


def test_round_trip():
    cfg = parse_config({**MINIMAL, "Ns": [100, 300], "space": {"H_bounds": [0.1, 0.9]}})
    again = parse_config(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    assert again.theta == cfg.theta and again.space == cfg.space and again.simulation == cfg.simulation
    json.dumps(cfg.to_dict())


def test_defaults_for_other_n():
    assert parse_config({"n": 1, "seed": 0}).theta.H == (0.5,)
    assert parse_config({"seed": 0}).theta.n == 3


def test_precedence():
    env = {"MMFOU_N": "300", "MMFOU_seed": "7", "MMFOU_jobs": "2"}
    cfg = parse_config({**MINIMAL, "N": 100}, {"seed": 9, "N": None}, environ=env)
    assert cfg.N == 300 and cfg.seed == 9 and cfg.jobs == 2
    assert env_overrides({"MMFOU_T": "2.5", "mmfou_N": "5"}) == {"T": 2.5}
    with pytest.raises(ValidationError):
        env_overrides({"MMFOU_N": "many"})


def test_config_file(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps(MINIMAL))
    assert parse_config(str(p)).seed == 1
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ValidationError):
        parse_config(str(tmp_path / "bad.json"))
    with pytest.raises(ValidationError):
        parse_config(str(tmp_path / "missing.json"))


# -- CSV ------------------------------------------------------------------------------------


def test_csv_round_trip_bit_exact(theta_mix3):
    path = mmfou_path(theta_mix3, SimulationConfig(300, 1.0, seed=12))
    text = cli.write_path_csv(path)
    assert text.splitlines()[0] == "time,value"
    back = cli.read_path_csv(text)
    assert np.array_equal(back.values, path.values)
    assert back.alpha == pytest.approx(path.alpha, rel=1e-15) and back.N == path.N


@pytest.mark.parametrize("text", ["t,v\n0,1\n1,2\n", "time,value\n0,1\n", "time,value\n0,1\n1,2\n3,4\n",
                                  "time,value\n0,a\n1,2\n"])
def test_csv_rejects(text):
    with pytest.raises(ValidationError):
        cli.read_path_csv(text)


# -- command line ------------------------------------------------------------------------------


def run(*argv):
    return cli.main(list(argv))


def test_simulate_then_estimate(tmp_path):
    assert run("simulate", "--seed", "3", "--n", "1", "--N", "200", "--out", "p.csv") == 0
    manifest = json.loads((tmp_path / "p.csv.manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["exit_code"] == 0 and manifest["outputs"] == ["p.csv"]
    assert set(manifest["versions"]) >= {"python", "numpy", "scipy", "mmfou"}
    # the manifest reproduces the output
    cfg = parse_config(manifest["config"])
    again = cli.write_path_csv(mmfou_path(cfg.theta, cfg.simulation))
    assert again == (tmp_path / "p.csv").read_text()

    assert run("estimate", "--seed", "3", "--n", "1", "--input", "p.csv", "--out", "est.json") == 0
    est = json.loads((tmp_path / "est.json").read_text())
    assert est["N"] == 200 and len(est["theta_hat"]["H"]) == 1


def test_missing_seed_exit_2(tmp_path, capsys):
    assert run("simulate", "--n", "1") == 2
    assert "seed" in capsys.readouterr().err


def test_env_seed(monkeypatch, tmp_path):
    monkeypatch.setenv("MMFOU_seed", "11")
    assert run("simulate", "--n", "1", "--N", "20", "--out", "a.csv") == 0
    assert json.loads((tmp_path / "a.csv.manifest.json").read_text())["seed"] == 11


def test_bad_config_exit_2(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"seed": 1, "colour": "red"}))
    assert run("simulate", "--config", "c.json") == 2


def test_estimate_without_input_exit_2(tmp_path):
    assert run("estimate", "--seed", "1", "--n", "1") == 2
    assert json.loads((tmp_path / "mmfou-estimate.manifest.json").read_text())["exit_code"] == 2


def test_asymptotics_numeric_failure_exit_3(tmp_path):
    assert run("asymptotics", "--seed", "1", "--N", "10000", "--manifest", "m.json") == 3
    assert json.loads((tmp_path / "m.json").read_text())["exit_code"] == 3


def test_asymptotics_and_check(tmp_path):
    assert run("asymptotics", "--seed", "1", "--n", "1", "--N", "20", "--out", "a.json") == 0
    doc = json.loads((tmp_path / "a.json").read_text())
    assert len(doc["standard_errors"]) == 3 and doc["acov_mode"] == "exact"
    assert run("check", "--seed", "1", "--out", "c.json") == 0
    doc = json.loads((tmp_path / "c.json").read_text())
    assert doc["consistency"][0]["n_minors"] == 127
    assert doc["normality"]["orders"] == list(range(1, 8)) and doc["normality"]["ok"]


def _stub(path, space, options):
    from types import SimpleNamespace
    return SimpleNamespace(theta_hat=ParameterVector(0.5, (0.5,), (1.0,)), objective_value=0.0, converged=False)


def test_benchmark_failure_exit_4(monkeypatch, tmp_path):
    import mmfou.montecarlo as mc
    monkeypatch.setattr(mc, "default_estimator", _stub)
    monkeypatch.setattr(cli, "run_benchmark",
                        lambda cfg, jobs, options: mc.run_benchmark(cfg, jobs, estimator=_stub, options=options))
    status = run("benchmark", "--seed", "1", "--n", "1", "--m", "2", "--out", "b.json", "--csv", "r.csv")
    assert status == 4
    assert json.loads((tmp_path / "b.json").read_text())["failed"] is True
    assert (tmp_path / "r.csv").read_text().startswith("replication,N,lambda,H1,sigma1,objective,converged")


def test_benchmark_small(tmp_path):
    cfg = {"n": 1, "lambda": 0.5, "H": [0.5], "sigma": [1.0], "seed": 4, "Ns": [50], "m": 2,
           "mode": "exact", "estimator": {"n_starts": 2, "maxiter": 200}}
    (tmp_path / "b.json").write_text(json.dumps(cfg))
    assert run("benchmark", "--config", "b.json", "--out", "r.json") == 0
    rec = json.loads((tmp_path / "r.json").read_text())["records"][0]
    assert rec["N"] == 50 and rec["m"] == 2


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "mmfou", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for name in ("simulate", "estimate", "benchmark", "check", "asymptotics"):
        assert name in out.stdout
    assert "MMFOU_" in out.stdout
