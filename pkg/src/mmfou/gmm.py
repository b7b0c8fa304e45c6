"""GMM estimation of theta from one equidistant sample path.

For each filter a_l the filtered series phi_l(t_i) = sum_q a_q U_{t_{i-q}} has
mean square V_l(theta) = sum_k b_k rho_theta(alpha k).  The estimator
minimizes Q(theta) = g' A g with g_l = mean(phi_l^2) - V_l(theta) over a box.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import least_squares, minimize
from scipy.special import logit
from scipy.stats import qmc

from .errors import EstimationError, ValidationError
from .filters import Filter, FilterBank, build_filter_bank
from .model import (
    ACOV_MODES,
    EXACT,
    SMALL_LAG,
    ParameterSpace,
    ParameterVector,
    _acov_exact_kernel,
    _acov_small_kernel,
    acov,
)
from .simulate import SamplePath

log = logging.getLogger(__name__)


def filtered_series(path: SamplePath, f: Filter) -> np.ndarray:
    """phi(t_i) = sum_q a_q values[i - q] for i = L..N."""
    v = path.values
    if v.size < len(f.coeffs):
        raise ValidationError(f"path of {v.size} points is shorter than the filter ({len(f.coeffs)})")
    return np.convolve(v, f.a, mode="valid")


def sample_moments(path: SamplePath, bank: FilterBank) -> np.ndarray:
    return np.array([np.mean(filtered_series(path, f) ** 2) for f in bank.filters])


def model_variances(theta: ParameterVector, bank: FilterBank, acov_mode: str = SMALL_LAG) -> np.ndarray:
    """(V_1(theta), ..., V_L(theta))."""
    return bank.B @ np.atleast_1d(acov(theta, bank.lags(), acov_mode))


def model_variance(theta: ParameterVector, bank: FilterBank, ell: int, acov_mode: str = SMALL_LAG) -> float:
    """V_ell(theta) = sum_k b_k rho_theta(alpha k) for filter index ``ell`` (0-based)."""
    return float(model_variances(theta, bank, acov_mode)[ell])


def _check_weight_matrix(A, L):
    A = np.asarray(A, dtype=float)
    if A.shape != (L, L):
        raise ValidationError(f"weight matrix must be {L}x{L}, got {A.shape}")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValidationError("weight matrix must be symmetric")
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise ValidationError("weight matrix must be positive definite") from exc
    return A


@dataclass
class GmmProblem:
    bank: FilterBank
    sample_moments: np.ndarray
    space: ParameterSpace
    weight_matrix: np.ndarray | None = None
    acov_mode: str = SMALL_LAG
    N: int | None = None

    def __post_init__(self):
        L = self.bank.L
        s = np.asarray(self.sample_moments, dtype=float)
        if s.shape != (L,):
            raise ValidationError(f"need {L} sample moments, got shape {s.shape}")
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ValidationError("sample moments are mean squares and must be finite and >= 0")
        self.sample_moments = s
        A = np.eye(L) if self.weight_matrix is None else self.weight_matrix
        self.weight_matrix = _check_weight_matrix(A, L)
        if self.acov_mode not in ACOV_MODES:
            raise ValidationError(f"acov_mode must be one of {ACOV_MODES}, got {self.acov_mode!r}")
        if self.bank.rank < self.space.dim:
            raise ValidationError(
                f"rank(B) = {self.bank.rank} is below the number of parameters {self.space.dim}"
            )

    @classmethod
    def from_path(cls, path: SamplePath, space: ParameterSpace, weight_matrix=None,
                  acov_mode: str = SMALL_LAG, bank: FilterBank | None = None) -> "GmmProblem":
        bank = build_filter_bank(space.n, path.alpha) if bank is None else bank
        return cls(bank, sample_moments(path, bank), space, weight_matrix, acov_mode, path.N)

    def variances_from_array(self, x: np.ndarray) -> np.ndarray:
        return _variances(np.asarray(x, dtype=float), self.acov_mode == EXACT, self.bank.lags(), self.bank.B)

    def objective_from_array(self, x: np.ndarray) -> float:
        g = self.sample_moments - self.variances_from_array(x)
        return float(g @ self.weight_matrix @ g)


@njit(cache=True)
def _variances(x, exact, lags, B):
    n = (x.size - 1) // 2
    lam, H, sig = x[0], x[1 : n + 1], x[n + 1 :]
    if exact:
        rho = _acov_exact_kernel(lam, H, sig, lags)
    else:
        rho = _acov_small_kernel(lam, H, sig, lags)
    return B @ rho


def g_hat(problem: GmmProblem, theta: ParameterVector) -> np.ndarray:
    """Sampled moment discrepancies s_l - V_l(theta)."""
    return problem.sample_moments - model_variances(theta, problem.bank, problem.acov_mode)


def objective(problem: GmmProblem, theta: ParameterVector) -> float:
    """Q(theta) = g' A g."""
    g = g_hat(problem, theta)
    return float(g @ problem.weight_matrix @ g)


# --------------------------------------------------------------------------
# minimizer
# --------------------------------------------------------------------------


@njit(cache=True)
def _forward(z, a, b, log_scale, lo, hi):
    x = np.empty_like(z)
    for j in range(z.size):
        y = a[j] + (b[j] - a[j]) / (1.0 + math.exp(-z[j]))
        v = math.exp(y) if log_scale[j] else y
        x[j] = min(max(v, lo[j]), hi[j])
    return x


@njit(cache=True)
def _scaled_objective(z, box, exact, lags, B, s, A, inv_scale):
    x = _forward(z, box[0], box[1], box[2], box[3], box[4])
    g = s - _variances(x, exact, lags, B)
    return (g @ (A @ g)) * inv_scale


@njit(cache=True)
def _scaled_residuals(z, box, exact, lags, B, s, chol_t, inv_root):
    x = _forward(z, box[0], box[1], box[2], box[3], box[4])
    g = s - _variances(x, exact, lags, B)
    return (chol_t @ g) * inv_root


class BoxTransform:
    """Maps R^d onto the open box: logit of the (log-)position in each interval.

    lambda and sigma_k are positioned on a log scale, H_k linearly.
    """

    def __init__(self, space: ParameterSpace):
        self.lo = space.lower()
        self.hi = space.upper()
        n = space.n
        self.log_scale = np.array([True] + [False] * n + [True] * n)
        self._a = np.where(self.log_scale, np.log(self.lo), self.lo)
        self._b = np.where(self.log_scale, np.log(self.hi), self.hi)

    def from_unit(self, u):
        y = self._a + (self._b - self._a) * np.asarray(u)
        return np.where(self.log_scale, np.exp(y), y)

    def to_unit(self, x):
        x = np.asarray(x, dtype=float)
        y = np.where(self.log_scale, np.log(x), x)
        return (y - self._a) / (self._b - self._a)

    def forward(self, z):
        return _forward(np.asarray(z, dtype=float), self._a, self._b, self.log_scale, self.lo, self.hi)

    @property
    def arrays(self):
        return self._a, self._b, self.log_scale, self.lo, self.hi

    def inverse(self, x, eps=1e-9):
        return logit(np.clip(self.to_unit(x), eps, 1 - eps))


@dataclass
class EstimateOptions:
    acov_mode: str = SMALL_LAG
    weight_matrix: np.ndarray | None = None
    n_starts: int = 8
    ftol: float = 1e-10
    xtol: float = 1e-9
    maxiter: int = 5000
    restarts: int = 2
    polish: bool = True
    x0: ParameterVector | None = None


@dataclass
class StartResult:
    index: int
    theta: np.ndarray
    objective: float
    iterations: int
    converged: bool


@dataclass
class EstimateResult:
    theta_hat: ParameterVector
    objective_value: float
    iterations: int
    starts: int
    converged: bool
    start_results: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat.to_dict(),
            "objective_value": self.objective_value,
            "iterations": self.iterations,
            "starts": self.starts,
            "converged": self.converged,
        }


def start_points(space: ParameterSpace, n_starts: int = 8) -> np.ndarray:
    """Unit-cube starts: the box center, then unscrambled Halton points in [0.05, 0.95]^d."""
    d = space.dim
    pts = [np.full(d, 0.5)]
    if n_starts > 1:
        halton = qmc.Halton(d, scramble=False).random(n_starts)[1:]
        pts.extend(0.05 + 0.9 * halton)
    return np.array(pts[:n_starts])


def _run_start(f, z0, opts):
    total_iter = 0
    z, fz = np.asarray(z0, float), f(z0)
    converged = False
    for _ in range(1 + opts.restarts):
        res = minimize(
            f, z, method="Nelder-Mead",
            options={"xatol": opts.xtol, "fatol": opts.ftol, "maxiter": opts.maxiter,
                     "maxfev": 2 * opts.maxiter, "adaptive": z.size > 2},
        )
        total_iter += res.nit
        converged = bool(res.success)
        improved = res.fun < fz - opts.ftol
        if res.fun <= fz:
            z, fz = res.x, res.fun
        # a fresh simplex at the optimum guards against premature collapse
        if not (converged and improved):
            break
    return z, fz, total_iter, converged


def _problem_arrays(problem):
    return (problem.acov_mode == EXACT, np.ascontiguousarray(problem.bank.lags()),
            np.ascontiguousarray(problem.bank.B), problem.sample_moments)


def _whitened_residuals(problem, tr, scale):
    # Q / scale = |r|^2 with r = L' g / sqrt(scale), A = L L'
    chol_t = np.ascontiguousarray(np.linalg.cholesky(problem.weight_matrix).T)
    exact, lags, B, s = _problem_arrays(problem)
    box = tr.arrays
    inv_root = 1.0 / math.sqrt(scale)

    def resid(z):
        return _scaled_residuals(np.asarray(z, dtype=float), box, exact, lags, B, s, chol_t, inv_root)

    return resid


def _polish(resid, z, fine=False):
    eps = np.finfo(float).eps
    if fine:
        res = least_squares(resid, z, method="trf", jac="3-point", xtol=eps, ftol=eps, gtol=eps,
                            max_nfev=4000 * z.size)
    else:
        res = least_squares(resid, z, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                            max_nfev=200 * z.size)
    return res.x, 2.0 * res.cost, res.nfev, res.status > 0


def solve(problem: GmmProblem, options: EstimateOptions | None = None) -> EstimateResult:
    """Multi-start Nelder-Mead on the box-transformed objective."""
    opts = options or EstimateOptions()
    s = problem.sample_moments
    A = problem.weight_matrix
    scale = float(s @ A @ s)
    if not scale > 0:
        raise EstimationError("all sample moments are zero (constant path); nothing to fit")
    tr = BoxTransform(problem.space)

    exact, lags, B, s_arr = _problem_arrays(problem)
    box = tr.arrays
    A_arr = np.ascontiguousarray(A)
    inv_scale = 1.0 / scale

    def f(z):
        return _scaled_objective(z, box, exact, lags, B, s_arr, A_arr, inv_scale)

    starts = [tr.inverse(tr.from_unit(u)) for u in start_points(problem.space, opts.n_starts)]
    if opts.x0 is not None:
        starts.insert(0, tr.inverse(opts.x0.as_array()))

    resid = _whitened_residuals(problem, tr, scale)
    results, zs = [], []
    for i, z0 in enumerate(starts):
        z, fz, nit, ok = _run_start(f, z0, opts)
        if opts.polish:
            # least-squares refinement reaches roots in flat, ill-conditioned valleys
            zp, fp, nfev, done = _polish(resid, z)
            nit += nfev
            if fp < fz:
                z, fz = zp, fp
                ok = ok or done
        zs.append(z)
        results.append(StartResult(i, tr.forward(z), fz * scale, nit, ok))

    pool = [r for r in results if r.converged] or results
    best = pool[0]
    for r in pool[1:]:
        if r.objective < best.objective - 1e-14 * scale:
            best = r
    if opts.polish:
        # slow trust-region pass on the winner only
        zp, fp, nfev, _ = _polish(resid, zs[best.index], fine=True)
        best.iterations += nfev
        if fp * scale < best.objective:
            best.theta, best.objective = tr.forward(zp), fp * scale
    theta = ParameterVector.from_array(best.theta)
    return EstimateResult(
        theta_hat=theta,
        objective_value=best.objective,
        iterations=sum(r.iterations for r in results),
        starts=len(results),
        converged=any(r.converged for r in results),
        start_results=results,
    )


def estimate(path: SamplePath, space: ParameterSpace, options: EstimateOptions | None = None) -> EstimateResult:
    """GMM estimate of theta from ``path`` over the box ``space``.

    Uses L = 2n+1 difference filters of orders 1..L with alpha taken from the
    path, and the small-lag covariance unless ``options.acov_mode`` says otherwise.
    """
    opts = options or EstimateOptions()
    if np.ptp(path.values) == 0:
        raise EstimationError("constant sample path; filtered moments are all zero")
    problem = GmmProblem.from_path(path, space, opts.weight_matrix, opts.acov_mode)
    return solve(problem, opts)
