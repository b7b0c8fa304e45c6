"""Parameters, autocovariance and spectral density of the finite mmfOU mixture.

The process is U = sum_k sigma_k U^{lambda, H_k} with independent stationary
fOU components sharing the mean-reversion rate ``lambda``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np
from numba import njit
from scipy.special import gammaln, psi
from scipy.special import zeta as hurwitz_zeta

from .errors import DomainError, NumericError, ValidationError
from .special import _bracket_deriv_vec, _bracket_vec, digamma, incomplete_gamma_bracket

log = logging.getLogger(__name__)

EXACT = "exact"
SMALL_LAG = "small_lag"
ACOV_MODES = (EXACT, SMALL_LAG)


class ConsistencyWarning(UserWarning):
    """Parameter outside the region where the estimator is known to be consistent."""


def lambda_consistency_bound(H_inf: float) -> float:
    """Largest admissible mean-reversion rate, exp(Psi(2 H_inf + 1))."""
    return math.exp(digamma(2.0 * H_inf + 1.0))


# --------------------------------------------------------------------------
# parameter types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ParameterVector:
    """theta = (lambda; H_1..H_n; sigma_1..sigma_n), stored with H ascending.

    Components are exchangeable, so construction sorts them by ``(H, sigma)``.
    """

    lam: float
    H: tuple
    sigma: tuple
    reordered: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        H = tuple(float(h) for h in np.atleast_1d(self.H))
        sigma = tuple(float(s) for s in np.atleast_1d(self.sigma))
        lam = float(self.lam)
        if len(H) == 0 or len(H) != len(sigma):
            raise ValidationError(
                f"H and sigma must be non-empty and of equal length, got {len(H)} and {len(sigma)}"
            )
        if not (math.isfinite(lam) and lam > 0):
            raise ValidationError(f"lambda must be > 0, got {lam}")
        for k, (h, s) in enumerate(zip(H, sigma)):
            if not (0.0 < h < 1.0):
                raise ValidationError(f"H[{k}] must lie in (0,1), got {h}")
            if not (math.isfinite(s) and s > 0):
                raise ValidationError(f"sigma[{k}] must be > 0, got {s}")
        order = sorted(range(len(H)), key=lambda k: (H[k], sigma[k]))
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "H", tuple(H[k] for k in order))
        object.__setattr__(self, "sigma", tuple(sigma[k] for k in order))
        if order != list(range(len(H))):
            object.__setattr__(self, "reordered", True)

    @property
    def n(self) -> int:
        return len(self.H)

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    def as_array(self) -> np.ndarray:
        return np.array((self.lam, *self.H, *self.sigma))

    @classmethod
    def from_array(cls, values) -> "ParameterVector":
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size < 3 or values.size % 2 == 0:
            raise ValidationError(f"parameter array must have odd length 2n+1 >= 3, got {values.shape}")
        n = (values.size - 1) // 2
        return cls(values[0], tuple(values[1 : n + 1]), tuple(values[n + 1 :]))

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "H": list(self.H), "sigma": list(self.sigma)}


@dataclass(frozen=True)
class ParameterSpace:
    """Closed box Theta for the estimator.

    The upper lambda bound may not exceed exp(Psi(2 H_inf + 1)).
    """

    n: int
    lambda_bounds: tuple
    H_bounds: tuple = (0.05, 0.95)
    sigma_bounds: tuple = (1e-3, 1e3)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError(f"n must be a positive integer, got {self.n}")
        lo, hi = (float(v) for v in self.lambda_bounds)
        h_lo, h_hi = (float(v) for v in self.H_bounds)
        s_lo, s_hi = (float(v) for v in self.sigma_bounds)
        if not 0.0 < h_lo < h_hi < 1.0:
            raise ValidationError(f"need 0 < H_inf < H_sup < 1, got {self.H_bounds}")
        if not 0.0 < s_lo < s_hi:
            raise ValidationError(f"need 0 < sigma_min < sigma_max, got {self.sigma_bounds}")
        if not 0.0 < lo < hi:
            raise ValidationError(f"need 0 < lambda_min < lambda_max, got {self.lambda_bounds}")
        bound = lambda_consistency_bound(h_lo)
        if hi > bound * (1 + 1e-12):
            raise ValidationError(
                f"lambda_max={hi} exceeds the consistency bound exp(Psi(2*H_inf+1))={bound:.6g}"
            )
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "lambda_bounds", (lo, hi))
        object.__setattr__(self, "H_bounds", (h_lo, h_hi))
        object.__setattr__(self, "sigma_bounds", (s_lo, s_hi))

    @classmethod
    def default(cls, n: int, H_bounds=(0.05, 0.95), sigma_bounds=(1e-3, 1e3), lambda_min=1e-3):
        return cls(n, (lambda_min, lambda_consistency_bound(H_bounds[0])), H_bounds, sigma_bounds)

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    def lower(self) -> np.ndarray:
        return np.array([self.lambda_bounds[0]] + [self.H_bounds[0]] * self.n + [self.sigma_bounds[0]] * self.n)

    def upper(self) -> np.ndarray:
        return np.array([self.lambda_bounds[1]] + [self.H_bounds[1]] * self.n + [self.sigma_bounds[1]] * self.n)

    def contains(self, theta: ParameterVector, rtol: float = 1e-12) -> bool:
        x = theta.as_array()
        lo, hi = self.lower(), self.upper()
        return theta.n == self.n and bool(np.all(x >= lo * (1 - rtol)) and np.all(x <= hi * (1 + rtol)))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "lambda_bounds": list(self.lambda_bounds),
            "H_bounds": list(self.H_bounds),
            "sigma_bounds": list(self.sigma_bounds),
        }


def warn_if_outside_consistency(theta: ParameterVector) -> bool:
    """Warn when lambda >= exp(Psi(2 min(H) + 1)); return True if inside."""
    bound = lambda_consistency_bound(min(theta.H))
    if theta.lam >= bound:
        warnings.warn(
            f"lambda={theta.lam:.6g} >= exp(Psi(2*H_inf+1))={bound:.6g}: outside the region "
            "where the moment map is known to be injective",
            ConsistencyWarning,
            stacklevel=2,
        )
        return False
    return True


# --------------------------------------------------------------------------
# autocovariance
# --------------------------------------------------------------------------


def _lags(t):
    tt = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(tt)) or np.any(tt < 0):
        raise DomainError("lags must be finite and >= 0")
    return tt


def _bracket(a: float, x: np.ndarray) -> np.ndarray:
    """e^{-x}(1 + gamma_a(x)) + e^{x} Gamma_a(x), with gamma_0 = 1 and Gamma_0 = 0."""
    val, spread = incomplete_gamma_bracket(a, x)
    if spread > 1e6:
        log.warning("acov_exact: cancellation factor %.3g in bracket (a=%g)", spread, a)
    return val


def component_acov_exact(lam: float, H: float, t) -> np.ndarray:
    """Autocovariance of a single unit-sigma fOU component."""
    tt = np.atleast_1d(_lags(t))
    scale = math.gamma(1.0 + 2.0 * H) / 4.0 * lam ** (-2.0 * H)
    return scale * _bracket(2.0 * H - 1.0, lam * tt)


def acov_exact(theta: ParameterVector, t):
    """rho_theta(t) = E[U_s U_{s+t}] through the incomplete-gamma representation."""
    tt = _lags(t)
    flat = np.atleast_1d(tt).ravel()
    out = np.zeros_like(flat)
    for h, s in zip(theta.H, theta.sigma):
        out += s * s * component_acov_exact(theta.lam, h, flat)
    return float(out[0]) if tt.ndim == 0 else out.reshape(tt.shape)


@njit(cache=True)
def _acov_small_kernel(lam, H, sig, t):
    out = np.zeros_like(t)
    for k in range(H.size):
        two_h = 2.0 * H[k]
        s2 = sig[k] * sig[k]
        level = H[k] * math.exp(math.lgamma(two_h)) * lam ** (-two_h)
        for i in range(t.size):
            p = t[i] ** two_h if t[i] > 0.0 else 0.0
            out[i] += s2 * (level - 0.5 * p)
    return out


def _acov_small_arrays(lam, H, sig, t):
    # t has shape (m,), H and sig shape (n,)
    return _acov_small_kernel(float(lam), np.asarray(H, dtype=float), np.asarray(sig, dtype=float),
                              np.ascontiguousarray(t, dtype=float))


def acov_smallt(theta: ParameterVector, t):
    """Small-lag approximation sum_k sigma_k^2 (H_k Gamma(2H_k)/lambda^{2H_k} - t^{2H_k}/2)."""
    tt = _lags(t)
    flat = np.atleast_1d(tt).ravel()
    out = _acov_small_arrays(theta.lam, np.array(theta.H), np.array(theta.sigma), flat)
    return float(out[0]) if tt.ndim == 0 else out.reshape(tt.shape)


def acov(theta: ParameterVector, t, mode: str = EXACT):
    if mode == EXACT:
        return acov_exact(theta, t)
    if mode == SMALL_LAG:
        return acov_smallt(theta, t)
    raise ValidationError(f"unknown covariance mode {mode!r}; expected one of {ACOV_MODES}")


def _small_lag_gradient(lam, H, sig, t):
    two_h = 2.0 * H
    level = H * np.exp(gammaln(two_h)) * lam ** (-two_h)  # H Gamma(2H) lambda^{-2H}
    pos = t > 0
    logt = np.log(np.where(pos, t, 1.0))
    powers = np.where(pos[:, None], np.exp(two_h[None, :] * logt[:, None]), 0.0)
    s2 = sig * sig
    d_lam = np.full(t.shape, float(np.sum(s2 * level * (-two_h) / lam)))
    d_level_dH = level * (1.0 / H + 2.0 * psi(two_h) - 2.0 * math.log(lam))
    d_H = s2[None, :] * (d_level_dH[None, :] - powers * logt[:, None])
    d_sig = 2.0 * sig[None, :] * (level[None, :] - 0.5 * powers)
    return np.column_stack([d_lam, d_H, d_sig])


def acov_gradient(theta: ParameterVector, t, mode: str = SMALL_LAG) -> np.ndarray:
    """Gradient of rho_theta(t) with respect to (lambda, H_1..H_n, sigma_1..sigma_n).

    Analytic for ``small_lag``.  For ``exact`` the lambda and sigma columns
    are analytic and the H columns use a five-point difference stencil.
    Returns shape ``t.shape + (2n+1,)``.
    """
    tt = _lags(t)
    flat = np.atleast_1d(tt).ravel()
    lam, H, sig = theta.lam, np.array(theta.H), np.array(theta.sigma)
    n = theta.n
    if mode == SMALL_LAG:
        grad = _small_lag_gradient(lam, H, sig, flat)
    elif mode == EXACT:
        grad = _exact_gradient(lam, H, sig, flat)
    else:
        raise ValidationError(f"unknown covariance mode {mode!r}")
    return grad[0] if tt.ndim == 0 else grad.reshape(tt.shape + (2 * n + 1,))


@njit(cache=True)
def _acov_exact_kernel(lam, H, sig, t):
    out = np.zeros_like(t)
    x = lam * t
    for k in range(H.size):
        h = H[k]
        scale = sig[k] * sig[k] * math.gamma(1.0 + 2.0 * h) / 4.0 * lam ** (-2.0 * h)
        vals, _ = _bracket_vec(2.0 * h - 1.0, x)
        out += scale * vals
    return out


@njit(cache=True)
def _exact_gradient_kernel(lam, H, sig, t):
    n = H.size
    grad = np.zeros((t.size, 2 * n + 1))
    x = lam * t
    for k in range(n):
        h = H[k]
        unit = math.gamma(1.0 + 2.0 * h) / 4.0 * lam ** (-2.0 * h)
        vals, _ = _bracket_vec(2.0 * h - 1.0, x)
        rho_k = unit * vals
        deriv = _bracket_deriv_vec(2.0 * h - 1.0, x)
        s2 = sig[k] * sig[k]
        for i in range(t.size):
            # t * bracket'(lambda t) -> 0 as t -> 0 for every H
            chain = t[i] * deriv[i] if t[i] > 0.0 else 0.0
            grad[i, 0] += s2 * (-2.0 * h / lam * rho_k[i] + unit * chain)
            grad[i, n + 1 + k] = 2.0 * sig[k] * rho_k[i]
        step = min(1e-3, 0.25 * h, 0.25 * (1.0 - h))
        cols = np.zeros((4, t.size))
        offsets = (-2.0, -1.0, 1.0, 2.0)
        for j in range(4):
            hh = h + offsets[j] * step
            u = math.gamma(1.0 + 2.0 * hh) / 4.0 * lam ** (-2.0 * hh)
            v, _ = _bracket_vec(2.0 * hh - 1.0, x)
            cols[j] = u * v
        for i in range(t.size):
            d = (cols[0, i] - 8.0 * cols[1, i] + 8.0 * cols[2, i] - cols[3, i]) / (12.0 * step)
            grad[i, 1 + k] = s2 * d
    return grad


def _exact_gradient(lam, H, sig, t):
    return _exact_gradient_kernel(float(lam), np.asarray(H, dtype=float), np.asarray(sig, dtype=float),
                                  np.ascontiguousarray(t, dtype=float))


def _acov_exact_arrays(lam, H, sig, t):
    # no canonical reordering: keeps finite-difference columns aligned
    return _acov_exact_kernel(float(lam), np.asarray(H, dtype=float), np.asarray(sig, dtype=float),
                              np.ascontiguousarray(t, dtype=float))


# --------------------------------------------------------------------------
# spectral density
# --------------------------------------------------------------------------


def _component_sdf(lam, H, x):
    c = math.sin(math.pi * H) * math.gamma(1.0 + 2.0 * H) / (2.0 * math.pi)
    ax = np.abs(x)
    with np.errstate(divide="ignore"):
        p = np.where(ax > 0, ax ** (1.0 - 2.0 * H), 0.0 if H < 0.5 else 1.0)
    return c * p / (x * x + lam * lam)


def sdf(theta: ParameterVector, x):
    """Spectral density sum_k sigma_k^2 f_{lambda,H_k}(x).

    Components with H_k > 1/2 have an integrable pole at 0; evaluating there
    raises :class:`DomainError`.
    """
    xx = np.asarray(x, dtype=float)
    if np.any(xx == 0):
        for k, h in enumerate(theta.H):
            if h > 0.5:
                raise DomainError(f"sdf has a pole at x=0 for component {k} (H={h})")
    out = np.zeros(xx.shape)
    for h, s in zip(theta.H, theta.sigma):
        out = out + s * s * _component_sdf(theta.lam, h, xx)
    return float(out) if xx.ndim == 0 else out


def _folded_tail(theta: ParameterVector, x: float, period: float, P: int) -> float:
    """sum_{|p| > P} f_theta(x + p period), summed exactly term by term.

    With y = p period +- x > lambda, each component is
    c y^(1-2H) / (lambda^2 + y^2) = c sum_j (-lambda^2)^j y^-(1+2H+2j), and
    sum_{p > P} (p period + x)^-s = period^-s zeta(s, P + 1 + x / period).
    """
    q_plus = P + 1 + x / period
    q_minus = P + 1 - x / period
    ratio = (theta.lam / (period * min(q_plus, q_minus))) ** 2
    if not ratio < 0.5:
        raise DomainError("tail series needs (P+1) period - |x| > sqrt(2) lambda")
    total = 0.0
    for h, sig in zip(theta.H, theta.sigma):
        c = sig * sig * math.sin(math.pi * h) * math.gamma(1.0 + 2.0 * h) / (2.0 * math.pi)
        part = 0.0
        for j in range(200):
            sj = 1.0 + 2.0 * h + 2.0 * j
            term = (-theta.lam**2) ** j * period ** (-sj) * (hurwitz_zeta(sj, q_plus) + hurwitz_zeta(sj, q_minus))
            part += term
            if abs(term) <= 1e-17 * abs(part):
                break
        total += c * part
    return float(total)


def sdf_folded(theta: ParameterVector, x: float, alpha: float, tol: float = 1e-10,
               max_shells: int = 1_000_000, block: int = 4096, tail: bool = False) -> float:
    """Aliased density sum_p f_theta(x + 2 p pi / alpha) for |x| <= pi/alpha.

    Symmetric shells p = +-1, +-2, ... are added until one contributes less
    than ``tol`` times the running total, and that truncated sum is returned.
    Its relative shortfall is roughly tol * P / (2 H_min), and for small H
    the loop may not stop within ``max_shells``.

    ``tail=True`` instead sums a few shells directly and adds the remainder
    through a Hurwitz zeta series, which is exact to rounding.
    """
    if alpha <= 0:
        raise DomainError("alpha must be > 0")
    period = 2.0 * math.pi / alpha
    if abs(x) > period / 2 * (1 + 1e-12):
        raise DomainError(f"|x| must be <= pi/alpha = {period / 2}")
    total = float(sdf(theta, x))
    if tail:
        P = max(1, math.ceil((2.0 * theta.lam + abs(x)) / period))
        p = np.arange(1, P + 1, dtype=float)
        head = float(np.sum(sdf(theta, x + p * period) + sdf(theta, x - p * period)))
        return total + head + _folded_tail(theta, x, period, P)
    p0 = 1
    while p0 <= max_shells:
        p = np.arange(p0, min(p0 + block, max_shells + 1), dtype=float)
        shell = sdf(theta, x + p * period) + sdf(theta, x - p * period)
        running = total + np.cumsum(shell)
        done = np.nonzero(shell < tol * running)[0]
        if done.size:
            return float(running[done[0]])
        total = float(running[-1])
        p0 += block
    raise NumericError(f"folded spectral density did not converge within {max_shells} shells")


# --------------------------------------------------------------------------
# integrability conditions for asymptotic normality
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalityCheck:
    ok: bool
    reason: str = ""
    pair: tuple | None = None

    def __bool__(self):
        return self.ok


def check_normality_conditions(orders: Sequence[int], H_sup: float) -> NormalityCheck:
    """Check square-integrability of the filtered spectral density for every filter pair.

    A pair (i, j) with ``l_i + l_j >= 1`` is fine for any H in (0,1); a pair
    of two order-0 filters additionally needs ``H_sup <= 3/4``.
    """
    orders = [int(o) for o in orders]
    if not orders or any(o < 0 for o in orders):
        raise ValidationError(f"orders must be a non-empty list of non-negative integers, got {orders}")
    if not 0.0 < H_sup < 1.0:
        raise ValidationError(f"H_sup must lie in (0,1), got {H_sup}")
    for i, j in combinations_with_replacement(range(len(orders)), 2):
        if orders[i] + orders[j] == 0 and H_sup > 0.75:
            return NormalityCheck(
                False,
                f"filters {i} and {j} both have order 0; this needs H_sup <= 3/4 but H_sup = {H_sup}",
                (i, j),
            )
    return NormalityCheck(True)
