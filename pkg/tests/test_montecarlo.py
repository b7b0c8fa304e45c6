import json
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmfou.errors import ValidationError
from mmfou.gmm import EstimateOptions
from mmfou.model import EXACT, ParameterSpace, ParameterVector
from mmfou.montecarlo import BenchmarkConfig, compute_metrics, run_benchmark


def truth_estimator(path, space, options):
    """Returns the true theta of the benchmark below regardless of data."""
    return SimpleNamespace(theta_hat=ParameterVector(0.5, (0.5,), (1.0,)), objective_value=0.0, converged=True)


def flaky_estimator(path, space, options):
    # converges on roughly half of the paths, decided by the data
    ok = path.values[-1] > path.values[0]
    return SimpleNamespace(theta_hat=ParameterVector(0.5, (0.5,), (1.0,)), objective_value=1.0, converged=bool(ok))


def test_metric_examples():
    th = ParameterVector(1.0, (0.5,), (1.0,))
    base = th.as_array()
    d = np.array([0.1, 0.0, 0.0])
    mse, top, b2 = compute_metrics([base + d, base - d], th)
    assert mse == pytest.approx(0.01)
    assert b2 == pytest.approx(0.0, abs=1e-30)
    assert top == pytest.approx(0.02)  # ddof = 1: ((0.1)^2 + (0.1)^2) / 1
    assert compute_metrics([base, base], th) == (0.0, 0.0, 0.0)


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.integers(2, 40))
def test_bias_variance_identity(seed, m):
    rng = np.random.default_rng(seed)
    th = ParameterVector(0.5, (0.3, 0.7), (1.0, 2.0))
    X = th.as_array() + rng.normal(scale=0.1, size=(m, 5)) + rng.normal(scale=0.05, size=5)
    mse, _, b2 = compute_metrics(X, th)
    tr = np.trace(np.cov(X, rowvar=False, ddof=1))
    assert mse == pytest.approx(tr * (m - 1) / m + b2, rel=1e-12, abs=1e-15)


@given(st.integers(0, 2**32 - 1))
def test_metrics_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    th = ParameterVector(0.5, (0.5,), (1.0,))
    X = rng.normal(size=(10, 3))
    perm = rng.permutation(10)
    a, b = compute_metrics(X, th), compute_metrics(X[perm], th)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-15)


def test_metric_validation():
    th = ParameterVector(0.5, (0.5,), (1.0,))
    with pytest.raises(ValidationError):
        compute_metrics([th.as_array()], th)
    with pytest.raises(ValidationError):
        compute_metrics(np.zeros((3, 5)), th)


def test_config_validation():
    th = ParameterVector(0.5, (0.5,), (1.0,))
    with pytest.raises(ValidationError):
        BenchmarkConfig(th, (), 5)
    with pytest.raises(ValidationError):
        BenchmarkConfig(th, (100,), 1)
    with pytest.raises(ValidationError):
        BenchmarkConfig(th, (0,), 5)
    with pytest.raises(ValidationError):
        BenchmarkConfig(th, (100,), 5, space=ParameterSpace.default(2))
    cfg = BenchmarkConfig(th, [100, 200], 5)
    assert cfg.Ns == (100, 200) and cfg.space.n == 1
    json.dumps(cfg.to_dict())


def test_truth_estimator_gives_zero_metrics():
    cfg = BenchmarkConfig(ParameterVector(0.5, (0.5,), (1.0,)), (50, 100), 4, base_seed=3)
    rep = run_benchmark(cfg, estimator=truth_estimator)
    assert not rep.failed
    for rec in rep.records:
        assert (rec.mse, rec.max_var_eigenvalue, rec.bias_sq) == (0.0, 0.0, 0.0)
        assert rec.m_effective == 4
    assert rep.record(100).N == 100
    with pytest.raises(KeyError):
        rep.record(7)


def test_nonconvergence_flags_failure():
    cfg = BenchmarkConfig(ParameterVector(0.5, (0.5,), (1.0,)), (50,), 20, base_seed=1)
    rep = run_benchmark(cfg, estimator=flaky_estimator)
    rec = rep.record(50)
    assert rec.m_effective == 13
    assert rep.failed and rec.nonconverged_fraction == pytest.approx(0.35)
    assert "FAILED" in rep.table()
    assert sum(r.converged for r in rep.replications) == 13


def test_reports_are_job_independent():
    th = ParameterVector(0.5, (0.5,), (1.0,))
    sp = ParameterSpace(1, (0.05, 0.7), (0.1, 0.9), (0.1, 5.0))
    cfg = BenchmarkConfig(th, (40,), 3, base_seed=9, space=sp, acov_mode=EXACT)
    opts = EstimateOptions(acov_mode=EXACT, n_starts=2, maxiter=200)
    one = run_benchmark(cfg, jobs=1, options=opts)
    two = run_benchmark(cfg, jobs=2, options=opts)
    assert one.to_json() == two.to_json()
    assert one.replications_csv() == two.replications_csv()


def test_report_outputs():
    cfg = BenchmarkConfig(ParameterVector(0.5, (0.3, 0.6), (1.0, 0.5)), (30,), 2, base_seed=2)
    rep = run_benchmark(cfg, estimator=truth_estimator_2)
    doc = json.loads(rep.to_json())
    assert doc["records"][0]["N"] == 30 and doc["config"]["m"] == 2
    lines = rep.replications_csv().splitlines()
    assert lines[0] == "replication,N,lambda,H1,H2,sigma1,sigma2,objective,converged"
    assert len(lines) == 3
    assert "MSE" in rep.table()


def truth_estimator_2(path, space, options):
    return SimpleNamespace(theta_hat=ParameterVector(0.5, (0.3, 0.6), (1.0, 0.5)), objective_value=0.0,
                           converged=True)
