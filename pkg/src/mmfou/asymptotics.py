"""Large-sample covariance of the GMM estimator and injectivity diagnostics.

With G the Jacobian of the expected moment function and A the weight matrix,

    sqrt(N) (theta_hat - theta0)  ~  N(0, C Lambda C'),   C = (G'AG)^{-1} G'A,

where Lambda is the long-run covariance of the squared filtered series.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import NumericError, ValidationError
from .filters import FilterBank, cross_b_vector, lagged_products
from .model import (
    EXACT,
    SMALL_LAG,
    ParameterVector,
    _acov_exact_arrays,
    acov_gradient,
    lambda_consistency_bound,
)

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
MAX_P_DIM = 12
LAMBDA_FORMS = ("isserlis", "verbatim")


def parameter_labels(n: int) -> list[str]:
    return ["lambda"] + [f"H{k + 1}" for k in range(n)] + [f"sigma{k + 1}" for k in range(n)]


def jacobian_G(theta: ParameterVector, bank: FilterBank, acov_mode: str = EXACT) -> np.ndarray:
    """G = -dV/dtheta, shape (L, 2n+1)."""
    return -bank.B @ acov_gradient(theta, bank.lags(), acov_mode)


def c_matrix(G: np.ndarray, A: np.ndarray | None = None) -> np.ndarray:
    """C = (G'AG)^{-1} G'A.

    Computed by QR of the whitened Jacobian R G (A = R'R) rather than the
    normal equations, which would square the condition number.  Raises
    :class:`NumericError` when R G is numerically rank deficient; the
    message names the parameter combination it cannot resolve.
    """
    G = np.asarray(G, dtype=float)
    L, d = G.shape
    A = np.eye(L) if A is None else np.asarray(A, dtype=float)
    if A.shape != (L, L):
        raise ValidationError(f"weight matrix must be {L}x{L}, got {A.shape}")
    try:
        R = np.linalg.cholesky(A).T
    except np.linalg.LinAlgError as exc:
        raise ValidationError("weight matrix must be positive definite") from exc
    RG = R @ G
    cond = np.linalg.cond(RG)
    if not cond < COND_LIMIT:
        _, _, vt = np.linalg.svd(RG)
        null = vt[-1]
        labels = parameter_labels((d - 1) // 2) if d % 2 == 1 else [f"x{j}" for j in range(d)]
        top = np.argsort(-np.abs(null))[:3]
        direction = ", ".join(f"{null[j]:+.3f}*{labels[j]}" for j in top if abs(null[j]) > 1e-3)
        raise NumericError(
            f"G is singular to working precision (condition {cond:.3g}); "
            f"near-null direction {direction}"
        )
    Q, Rg = np.linalg.qr(RG)
    return np.linalg.solve(Rg, Q.T @ R)


# --------------------------------------------------------------------------
# long-run covariance
# --------------------------------------------------------------------------


def _coefficient_table(bank: FilterBank, form: str):
    """Per filter pair, the coefficients and lag offsets of the inner sum."""
    L = bank.L
    table = {}
    for i in range(L):
        for j in range(i, L):
            fi, fj = bank.filters[i], bank.filters[j]
            if form == "isserlis":
                c = lagged_products(fi, fj)
                offsets = -np.arange(-fi.L, fi.L + 1)  # lag index p - d
            else:
                c = cross_b_vector(fi, fj)
                offsets = np.arange(fi.L + 1)  # lag index p + k
            table[i, j] = (c, offsets)
    return table


def _lambda_partial(theta, bank, table, p):
    """Per-p terms 2 [sum_d c_d rho(alpha |p + offset_d|)]^2 for an array of p."""
    L = bank.L
    idx = {key: np.abs(p[:, None] + off[None, :]) for key, (_, off) in table.items()}
    top = max(int(v.max()) for v in idx.values())
    lo = min(int(v.min()) for v in idx.values())
    lags = bank.alpha * np.arange(lo, top + 1, dtype=float)
    rho = _acov_exact_arrays(theta.lam, np.array(theta.H), np.array(theta.sigma), lags)
    out = np.empty((p.size, L, L))
    for (i, j), (c, _) in table.items():
        inner = rho[idx[i, j] - lo] @ c
        out[:, i, j] = out[:, j, i] = 2.0 * inner * inner
    return out


@dataclass
class LambdaResult:
    matrix: np.ndarray
    truncation_P: int
    converged: bool
    form: str


def lambda_matrix(theta0: ParameterVector, bank: FilterBank, tol: float = 1e-12,
                  max_P: int = 100_000, form: str = "isserlis", block: int = 512) -> LambdaResult:
    """Long-run covariance matrix of the squared filtered series.

    ``form="isserlis"`` sums 2 Cov(phi_i(t), phi_j(t + p alpha))^2 over all
    integer p, with Cov = sum_d c_d rho(alpha |p - d|) and c the lagged
    products of the two filters.  ``form="verbatim"`` uses the symmetric
    b^{i,j} coefficients at lags k + p instead.

    Shells p = +-P are added until the largest entry change drops below
    ``tol`` relative to the largest entry, or ``P`` reaches ``max_P``.
    """
    if form not in LAMBDA_FORMS:
        raise ValidationError(f"form must be one of {LAMBDA_FORMS}, got {form!r}")
    table = _coefficient_table(bank, form)
    total = _lambda_partial(theta0, bank, table, np.array([0]))[0]
    # shells inside the filter support overlap nonzero terms by construction
    min_P = 2 * (bank.L + 1)
    P = 0
    converged = False
    while P < max_P and not converged:
        p = np.arange(P + 1, min(P + block, max_P) + 1)
        shells = _lambda_partial(theta0, bank, table, p) + _lambda_partial(theta0, bank, table, -p)
        running = total[None] + np.cumsum(shells, axis=0)
        size = np.abs(running).max(axis=(1, 2))
        small = (np.abs(shells).max(axis=(1, 2)) <= tol * size) & (p >= min_P)
        hit = np.nonzero(small)[0]
        if hit.size:
            P = int(p[hit[0]])
            total = running[hit[0]]
            converged = True
        else:
            P = int(p[-1])
            total = running[-1]
    if not converged:
        log.warning("Lambda truncation reached the cap P=%d before relative tolerance %g", max_P, tol)
    return LambdaResult(total, P, converged, form)


def asymptotic_covariance(theta0: ParameterVector, bank: FilterBank, A: np.ndarray | None = None,
                          acov_mode: str = EXACT, **lambda_kw) -> np.ndarray:
    """C Lambda C', symmetrized."""
    return asymptotic_report(theta0, bank, A, acov_mode=acov_mode, **lambda_kw).covariance


# --------------------------------------------------------------------------
# P-matrix diagnostics
# --------------------------------------------------------------------------


def principal_minors(M: np.ndarray) -> list[tuple[tuple, float, float]]:
    """All principal minors as (indices, determinant, Hadamard scale), by increasing size."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"need a square matrix, got shape {M.shape}")
    d = M.shape[0]
    if d > MAX_P_DIM:
        raise ValidationError(f"P-matrix test supports dimension <= {MAX_P_DIM}, got {d}")
    out = []
    for k in range(1, d + 1):
        for idx in combinations(range(d), k):
            sub = M[np.ix_(idx, idx)]
            # det via LU with partial pivoting; Hadamard bound as the scale
            out.append((idx, float(np.linalg.det(sub)), float(np.prod(np.linalg.norm(sub, axis=1)))))
    return out


def _minor_positive(value, scale, rtol=1e-12):
    return value > rtol * scale


def is_p_matrix(M: np.ndarray, rtol: float = 1e-12) -> bool:
    """True iff every principal minor exceeds ``rtol`` times its Hadamard bound."""
    return all(_minor_positive(v, s, rtol) for _, v, s in principal_minors(M))


@dataclass
class ConsistencyReport:
    """Result of the injectivity probe at one step size.

    ``ok`` is the plain P-matrix test of the gradient matrix.
    ``p_matrix_reflected`` repeats it after flipping parameter axes by
    ``signs``, the only flip pattern that makes every diagonal entry positive.
    """

    ok: bool
    p_matrix_reflected: bool
    signs: list
    alpha: float
    matrix: np.ndarray
    minors: list
    lambda_bound: float
    lambda_inside: bool
    warnings: list = field(default_factory=list)

    @property
    def failing_minors(self) -> list:
        return [m for m in self.minors if not m["positive"]]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "p_matrix_reflected": self.p_matrix_reflected,
            "signs": self.signs,
            "alpha": self.alpha,
            "matrix": self.matrix.tolist(),
            "n_minors": len(self.minors),
            "minors": self.minors,
            "lambda_bound": self.lambda_bound,
            "lambda_inside": self.lambda_inside,
            "warnings": self.warnings,
        }


def gradient_matrix(theta: ParameterVector, alpha: float) -> np.ndarray:
    """Row k is the exact-covariance gradient at lag k alpha, k = 0..2n."""
    return acov_gradient(theta, alpha * np.arange(theta.dim), EXACT)


def consistency_check(theta: ParameterVector, alpha: float, H_inf: float | None = None,
                      rtol: float = 1e-12) -> ConsistencyReport:
    """P-matrix probe of the lag-gradient matrix at step ``alpha``.

    Note that d rho / d lambda at lag 0 is negative for every theta, so the
    1x1 minor on the lambda axis is never positive and ``ok`` is false
    everywhere.  Flipping a parameter axis preserves injectivity and
    multiplies each principal minor containing that axis by -1; the report
    also carries the test for the flip ``sign(diag M)``.
    """
    if not alpha > 0:
        raise ValidationError(f"alpha must be > 0, got {alpha}")
    if theta.dim > MAX_P_DIM:
        raise ValidationError(f"2n+1 = {theta.dim} exceeds the P-matrix dimension cap {MAX_P_DIM}")
    M = gradient_matrix(theta, alpha)
    signs = np.where(np.diag(M) < 0, -1, 1)
    minors = []
    literal = reflected = True
    for idx, value, scale in principal_minors(M):
        flipped = value * int(np.prod(signs[list(idx)]))
        pos_lit = _minor_positive(value, scale, rtol)
        pos_ref = _minor_positive(flipped, scale, rtol)
        literal &= pos_lit
        reflected &= pos_ref
        minors.append({"indices": list(idx), "value": value, "reflected_value": flipped,
                       "scale": scale, "positive": pos_lit, "positive_reflected": pos_ref})
    h_inf = min(theta.H) if H_inf is None else float(H_inf)
    bound = lambda_consistency_bound(h_inf)
    inside = theta.lam < bound
    notes = []
    if not inside:
        notes.append(f"lambda={theta.lam:.6g} is not below exp(Psi(2*H_inf+1))={bound:.6g}; "
                     "injectivity is not guaranteed for any step size")
    if not literal:
        bad = sum(not m["positive"] for m in minors)
        notes.append(f"not a P-matrix at this step ({bad} of {len(minors)} principal minors fail); "
                     "the closer lambda is to the bound, the smaller the sufficient step")
    return ConsistencyReport(bool(literal), bool(reflected), signs.tolist(), float(alpha), M, minors,
                             bound, bool(inside), notes)


def consistency_scan(theta: ParameterVector, alphas, H_inf: float | None = None) -> list[ConsistencyReport]:
    """consistency_check over a grid of step sizes."""
    return [consistency_check(theta, a, H_inf) for a in alphas]


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------


@dataclass
class AsymptoticsReport:
    G: np.ndarray
    C: np.ndarray
    Lambda: np.ndarray
    covariance: np.ndarray
    truncation_P: int
    p_matrix_ok: bool
    alpha_used: float
    lambda_form: str = "isserlis"
    acov_mode: str = EXACT
    warnings: list = field(default_factory=list)

    def standard_errors(self, N: int) -> np.ndarray:
        """Approximate standard deviations of theta_hat for N observations."""
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None) / N)

    def to_dict(self) -> dict:
        return {
            "G": self.G.tolist(),
            "C": self.C.tolist(),
            "Lambda": self.Lambda.tolist(),
            "covariance": self.covariance.tolist(),
            "truncation_P": self.truncation_P,
            "p_matrix_ok": self.p_matrix_ok,
            "alpha_used": self.alpha_used,
            "lambda_form": self.lambda_form,
            "acov_mode": self.acov_mode,
            "warnings": self.warnings,
        }


def asymptotic_report(theta0: ParameterVector, bank: FilterBank, A: np.ndarray | None = None,
                      acov_mode: str = EXACT, tol: float = 1e-12, max_P: int = 100_000,
                      form: str = "isserlis") -> AsymptoticsReport:
    """G, C, Lambda and C Lambda C' at theta0 for the given filter bank."""
    if acov_mode == SMALL_LAG:
        log.info("small-lag G has a zero lambda column for filters of order >= 1")
    G = jacobian_G(theta0, bank, acov_mode)
    C = c_matrix(G, A)
    lam = lambda_matrix(theta0, bank, tol=tol, max_P=max_P, form=form)
    cov = C @ lam.matrix @ C.T
    cov = 0.5 * (cov + cov.T)
    notes = []
    if not lam.converged:
        notes.append(f"Lambda truncation hit the cap P={max_P} before tolerance {tol}")
    p_ok = theta0.dim <= MAX_P_DIM and consistency_check(theta0, bank.alpha).ok
    return AsymptoticsReport(G, C, lam.matrix, cov, lam.truncation_P, p_ok, bank.alpha,
                             form, acov_mode, notes)


def psd_ok(M: np.ndarray, rtol: float = 1e-10) -> bool:
    """Symmetric within rtol*max|M| and min eigenvalue >= -rtol * trace."""
    M = np.asarray(M, dtype=float)
    scale = max(1e-300, float(np.abs(M).max()))
    if np.abs(M - M.T).max() > rtol * scale:
        return False
    tr = float(np.trace(M))
    return float(np.linalg.eigvalsh(M).min()) >= -rtol * abs(tr)


__all__ = [
    "jacobian_G",
    "c_matrix",
    "lambda_matrix",
    "LambdaResult",
    "asymptotic_covariance",
    "asymptotic_report",
    "AsymptoticsReport",
    "principal_minors",
    "is_p_matrix",
    "consistency_check",
    "consistency_scan",
    "ConsistencyReport",
    "gradient_matrix",
    "parameter_labels",
    "psd_ok",
]
