"""Real special functions used by the fOU autocovariance.

The two normalized incomplete gamma functions are

    gamma_lower_exp(a, x)    = 1/Gamma(a) * int_0^x s^(a-1) e^(+s) ds
    gamma_upper_scaled(a, x) = e^x/Gamma(a) * int_x^inf s^(a-1) e^(-s) ds

for ``a`` in (-1, 0) U (0, 1).  Note the positive exponent in the lower one.
For ``a < 0`` both are understood as analytic continuations in ``a``.

All functions accept a scalar or array ``x`` and return the same shape.
The elementwise kernels are compiled with numba since they sit in the inner
loop of the estimator when the exact covariance is used.
"""

import math

import numpy as np
from numba import njit
from scipy import special as _sc

from .errors import DomainError

__all__ = [
    "ln_gamma",
    "digamma",
    "gamma_lower_exp",
    "gamma_upper_scaled",
    "lower_exp_scaled",
    "upper_regularized_scaled",
    "incomplete_gamma_bracket",
]

_CF_SWITCH = 1.5
_ASYMPTOTIC_SWITCH = 60.0


def _check_positive(z, name="z"):
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)) or np.any(z <= 0):
        raise DomainError(f"{name} must be finite and > 0, got {z!r}")
    return z


def _check_order(a):
    if not np.isfinite(a) or a == 0.0 or not -1.0 < a < 1.0:
        raise DomainError(f"incomplete gamma order must lie in (-1,0)U(0,1), got {a!r}")
    return float(a)


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise DomainError("x must be finite and >= 0")
    return x


def _flat(x):
    return np.ascontiguousarray(np.atleast_1d(np.asarray(x, dtype=float)).ravel())


def _out(arr, like):
    arr = np.asarray(arr)
    return float(arr.reshape(-1)[0]) if np.ndim(like) == 0 else arr.reshape(np.shape(like))


def ln_gamma(z):
    """log Gamma(z) for z > 0."""
    zz = _check_positive(z)
    return _out(_sc.gammaln(zz), z)


def digamma(z):
    """Psi(z) = Gamma'(z)/Gamma(z) for z > 0."""
    zz = _check_positive(z)
    return _out(_sc.psi(zz), z)


# scalar kernels


@njit(cache=True)
def _rgamma(a):
    # 1/Gamma(a) written as a/Gamma(1+a): stays accurate as a -> 0
    return a / math.gamma(1.0 + a)


@njit(cache=True)
def _lower_scaled_1(a, x):
    # e^(-x) gamma_lower_exp(a, x), 0 < a < 1
    if x <= 0.0:
        return 0.0
    rg = _rgamma(a)
    if x >= _ASYMPTOTIC_SWITCH:
        term = 1.0
        total = 1.0
        for j in range(1, 60):
            term *= (j - a) / x
            total += term
            if abs(term) < 1e-17 * total:
                break
        return rg * x ** (a - 1.0) * total
    # sum_k x^(a+k) e^(-x) / (k! (a+k)), terms by running product
    c = math.exp(a * math.log(x) - x)
    total = c / a
    k = 0
    while True:
        k += 1
        c *= x / k
        term = c / (a + k)
        total += term
        if k > x and term < 1e-17 * total:
            break
    return rg * total


@njit(cache=True)
def _upper_scaled_1(a, x):
    # e^x Gamma(a, x) / Gamma(a), a in (-1, 0) U (0, 1)
    if x == 0.0:
        return 1.0 if a > 0.0 else np.inf
    rg = _rgamma(a)
    if x < _CF_SWITCH:
        # 1 - gamma*(a, x) with gamma*(a, x) = sum_k (-1)^k x^(a+k) / (k! (a+k) Gamma(a));
        # the k = 0 term is kept apart so 1 - head is exact as a -> 0
        logx = math.log(x)
        one_minus_head = -math.expm1(a * logx - math.lgamma(1.0 + a))
        c = math.exp(a * logx)
        total = 0.0
        for k in range(1, 60):
            c *= -x / k
            term = c / (a + k)
            total += term
            if abs(term) <= 1e-17 * abs(total):
                break
        return math.exp(x) * (one_minus_head - rg * total)
    # modified Lentz on the Legendre continued fraction for e^x Gamma(a, x) / x^a
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return rg * x**a * h


@njit(cache=True)
def _lower_scaled_vec(a, x):
    out = np.empty_like(x)
    for i in range(x.size):
        out[i] = _lower_scaled_1(a, x[i])
    return out


@njit(cache=True)
def _upper_scaled_vec(a, x):
    out = np.empty_like(x)
    for i in range(x.size):
        out[i] = _upper_scaled_1(a, x[i])
    return out


@njit(cache=True)
def _bracket_vec(a, x):
    out = np.empty_like(x)
    spread = 1.0
    for i in range(x.size):
        xi = x[i]
        ex = math.exp(-xi)
        if a == 0.0:
            out[i] = 2.0 * ex
            continue
        if a > 0.0:
            lo = _lower_scaled_1(a, xi)
            up = _upper_scaled_1(a, xi)
        else:
            # order shifted by one so the x^a singularities of both terms cancel exactly
            lo = -_lower_scaled_1(a + 1.0, xi)
            up = _upper_scaled_1(a + 1.0, xi)
        v = ex + lo + up
        out[i] = v
        r = (ex + abs(lo) + abs(up)) / abs(v)
        if r > spread:
            spread = r
    return out, spread


@njit(cache=True)
def _bracket_deriv_vec(a, x):
    # d/dx of the bracket: -e^{-x}(1 + gamma_a(x)) + e^{x} Gamma_a(x); for a < 0 the
    # shifted pieces leave an explicit -2 x^a / Gamma(a+1), infinite at x = 0
    out = np.empty_like(x)
    for i in range(x.size):
        xi = x[i]
        ex = math.exp(-xi)
        if a == 0.0:
            out[i] = -2.0 * ex
        elif a > 0.0:
            out[i] = -ex - _lower_scaled_1(a, xi) + _upper_scaled_1(a, xi)
        elif xi == 0.0:
            out[i] = -np.inf
        else:
            head = 2.0 * math.exp(a * math.log(xi) - math.lgamma(a + 1.0))
            out[i] = -ex + _lower_scaled_1(a + 1.0, xi) + _upper_scaled_1(a + 1.0, xi) - head
    return out


def lower_exp_scaled(a, x):
    """e^(-x) * gamma_lower_exp(a, x) for ``a`` in (0, 1).

    Series in the rescaled terms x^(a+k) e^(-x) / k! for moderate x,
    the asymptotic expansion x^(a-1)/Gamma(a) * sum_j (1-a)_j / x^j above
    ``x = 60`` (remainder is below double precision there).
    """
    if not 0.0 < a < 1.0:
        raise DomainError(f"lower_exp_scaled needs a in (0,1), got {a!r}")
    return _out(_lower_scaled_vec(float(a), _flat(x)), x)


def upper_regularized_scaled(a, x):
    """e^x * Gamma(a, x) / Gamma(a) for ``a`` in (-1, 0) U (0, 1).

    Power series below ``x = 1.5``, continued fraction above.
    """
    return _out(_upper_scaled_vec(float(a), _flat(x)), x)


def incomplete_gamma_bracket(a, x):
    """e^{-x}(1 + gamma_a(x)) + e^{x} Gamma_a(x), with gamma_0 = 1 and Gamma_0 = 0.

    Returns the values and the largest ratio of summed absolute terms to the
    result, which measures cancellation.
    """
    vals, spread = _bracket_vec(float(a), _flat(x))
    return _out(vals, x), float(spread)


def gamma_lower_exp(alpha, x):
    """Normalized lower incomplete gamma with kernel e^(+s).

    ``x = 0`` returns 0 (empty integration range) for every admissible order.
    For negative order the value diverges as x -> 0+, so that convention is
    discontinuous there.
    """
    a = _check_order(alpha)
    xx = _flat(_check_x(x))
    with np.errstate(over="ignore"):
        if a > 0:
            res = np.exp(xx) * _lower_scaled_vec(a, xx)
        else:
            # integration by parts: gamma_a(x) = x^a e^x / Gamma(a+1) - gamma_{a+1}(x)
            res = np.zeros_like(xx)
            pos = xx > 0
            xp = np.ascontiguousarray(xx[pos])
            res[pos] = np.exp(xp) * (xp**a / math.gamma(a + 1.0) - _lower_scaled_vec(a + 1.0, xp))
    return _out(res, x)


def gamma_upper_scaled(alpha, x):
    """e^x times the normalized upper incomplete gamma.

    Finite for large x where e^x itself overflows.  For negative order the
    integral diverges at ``x = 0`` and ``inf`` is returned there.
    """
    a = _check_order(alpha)
    return _out(_upper_scaled_vec(a, _flat(_check_x(x))), x)
