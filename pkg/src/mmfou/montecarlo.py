"""Replicated simulate-then-estimate experiments and their error metrics."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError
from .gmm import EstimateOptions, EstimateResult, estimate
from .model import SMALL_LAG, ParameterSpace, ParameterVector
from .simulate import SimulationConfig, mmfou_path

log = logging.getLogger(__name__)

MAX_NONCONVERGED = 0.2


@dataclass(frozen=True)
class BenchmarkConfig:
    theta0: ParameterVector
    Ns: tuple
    m: int
    T: float = 1.0
    base_seed: int = 0
    space: ParameterSpace | None = None
    acov_mode: str = SMALL_LAG

    def __post_init__(self):
        Ns = tuple(int(v) for v in np.atleast_1d(self.Ns))
        if not Ns or any(v < 1 for v in Ns):
            raise ValidationError(f"Ns must be a non-empty list of positive integers, got {self.Ns}")
        if int(self.m) < 2:
            raise ValidationError(f"m must be >= 2, got {self.m}")
        if not self.T > 0:
            raise ValidationError(f"T must be > 0, got {self.T}")
        object.__setattr__(self, "Ns", Ns)
        object.__setattr__(self, "m", int(self.m))
        if self.space is None:
            object.__setattr__(self, "space", ParameterSpace.default(self.theta0.n))
        if self.space.n != self.theta0.n:
            raise ValidationError("space and theta0 disagree on n")

    def to_dict(self) -> dict:
        return {
            "theta0": self.theta0.to_dict(),
            "Ns": list(self.Ns),
            "m": self.m,
            "T": self.T,
            "base_seed": self.base_seed,
            "space": self.space.to_dict(),
            "acov_mode": self.acov_mode,
        }


@dataclass
class Replication:
    replication: int
    N: int
    theta_hat: np.ndarray
    objective: float
    converged: bool


@dataclass
class NRecord:
    N: int
    mse: float
    max_var_eigenvalue: float
    bias_sq: float
    m_effective: int
    m: int

    @property
    def nonconverged_fraction(self) -> float:
        return 1.0 - self.m_effective / self.m


@dataclass
class MetricsReport:
    config: dict
    records: list
    failed: bool
    replications: list = field(default_factory=list, repr=False)

    def record(self, N: int) -> NRecord:
        for r in self.records:
            if r.N == N:
                return r
        raise KeyError(N)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "failed": self.failed,
            "records": [
                {
                    "N": r.N,
                    "mse": r.mse,
                    "max_var_eigenvalue": r.max_var_eigenvalue,
                    "bias_sq": r.bias_sq,
                    "m_effective": r.m_effective,
                    "m": r.m,
                }
                for r in self.records
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        lines = [f"{'N':>6} {'MSE':>12} {'e(Var)':>12} {'Bias^2':>12} {'m_eff':>6}"]
        for r in self.records:
            lines.append(f"{r.N:>6} {r.mse:>12.6f} {r.max_var_eigenvalue:>12.6f} {r.bias_sq:>12.6f} {r.m_effective:>6}")
        if self.failed:
            lines.append(f"FAILED: more than {MAX_NONCONVERGED:.0%} of replications did not converge")
        return "\n".join(lines)

    def replications_csv(self) -> str:
        n = len(self.config["theta0"]["H"])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replication", "N", "lambda"] + [f"H{k + 1}" for k in range(n)]
                   + [f"sigma{k + 1}" for k in range(n)] + ["objective", "converged"])
        for rep in self.replications:
            w.writerow([rep.replication, rep.N] + [repr(float(v)) for v in rep.theta_hat]
                       + [repr(float(rep.objective)), int(rep.converged)])
        return buf.getvalue()


def compute_metrics(estimates, theta0: ParameterVector) -> tuple[float, float, float]:
    """(MSE, largest eigenvalue of the sample covariance, squared bias norm).

    The covariance uses the 1/(m-1) normalization.
    """
    X = np.array([e.as_array() if isinstance(e, ParameterVector) else np.asarray(e, float) for e in estimates])
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValidationError("need at least two estimates")
    t0 = theta0.as_array()
    if X.shape[1] != t0.size:
        raise ValidationError(f"estimates have dimension {X.shape[1]}, theta0 has {t0.size}")
    err = X - t0
    mse = float(np.mean(np.sum(err * err, axis=1)))
    bias = err.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1)
    top = float(np.linalg.eigvalsh(np.atleast_2d(cov))[-1])
    return mse, max(top, 0.0), float(bias @ bias)


def _one(task):
    cfg, N, r, estimator, options = task
    sim = SimulationConfig(N=N, T=cfg.T, seed=cfg.base_seed, replication=r)
    path = mmfou_path(cfg.theta0, sim)
    res = estimator(path, cfg.space, options)
    return Replication(r, N, res.theta_hat.as_array(), float(res.objective_value), bool(res.converged))


def default_estimator(path, space, options) -> EstimateResult:
    return estimate(path, space, options)


def run_benchmark(cfg: BenchmarkConfig, jobs: int = 1,
                  estimator: Callable = default_estimator,
                  options: EstimateOptions | None = None) -> MetricsReport:
    """Simulate and estimate ``m`` replications for each N and summarize.

    Replication r draws from the stream (base_seed, r), so results do not
    depend on ``jobs``.  ``estimator(path, space, options)`` must return an
    object with ``theta_hat``, ``objective_value`` and ``converged``; it has
    to be picklable when ``jobs > 1``.
    """
    opts = options or EstimateOptions(acov_mode=cfg.acov_mode)
    tasks = [(cfg, N, r, estimator, opts) for N in cfg.Ns for r in range(cfg.m)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reps = list(pool.map(_one, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        reps = [_one(t) for t in tasks]

    records = []
    failed = False
    for N in cfg.Ns:
        rows = [rep for rep in reps if rep.N == N]
        good = [rep.theta_hat for rep in rows if rep.converged]
        if len(good) >= 2:
            mse, top, b2 = compute_metrics(good, cfg.theta0)
        else:
            mse = top = b2 = float("nan")
        rec = NRecord(N, mse, top, b2, len(good), cfg.m)
        if rec.nonconverged_fraction > MAX_NONCONVERGED:
            log.warning("N=%d: %d of %d replications did not converge", N, cfg.m - len(good), cfg.m)
            failed = True
        records.append(rec)
    return MetricsReport(cfg.to_dict(), records, failed, reps)
