"""Difference filters, their quadratic-form b-vectors and the filter bank."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import ValidationError

RANK_RTOL = 1e-10


def _moment(coeffs, r):
    q = np.arange(len(coeffs))
    # integer arithmetic keeps the annihilation check exact for integer filters
    if np.all(np.asarray(coeffs) == np.round(coeffs)):
        return sum(int(a) * int(k) ** r for a, k in zip(np.round(coeffs).astype(int), q))
    return float(np.sum(np.asarray(coeffs) * q.astype(float) ** r))


@dataclass(frozen=True)
class Filter:
    """Filter a = (a_0..a_L) of order l: annihilates polynomials of degree < l."""

    coeffs: tuple
    order: int

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        l = int(self.order)
        if l < 0 or l >= len(coeffs):
            raise ValidationError(f"order {l} impossible for a filter of length {len(coeffs)}")
        if l == 0:
            if coeffs[0] != 1.0 or any(c != 0.0 for c in coeffs[1:]):
                raise ValidationError("an order-0 filter must be (1, 0, ..., 0)")
            return
        scale = max(abs(c) for c in coeffs)
        for r in range(l):
            if abs(_moment(coeffs, r)) > 1e-12 * scale * max(1, len(coeffs) ** r):
                raise ValidationError(f"filter does not annihilate q^{r}; order {l} invalid")
        if _moment(coeffs, l) == 0:
            raise ValidationError(f"filter annihilates q^{l}; its order exceeds {l}")

    @property
    def L(self) -> int:
        return len(self.coeffs) - 1

    @property
    def a(self) -> np.ndarray:
        return np.array(self.coeffs)


def finite_difference_filter(l: int, L: int) -> Filter:
    """Binomial difference filter a_q = (-1)^q C(l, q), zero-padded to length L+1."""
    if not 0 <= l <= L:
        raise ValidationError(f"need 0 <= l <= L, got l={l}, L={L}")
    coeffs = [(-1) ** q * comb(l, q) for q in range(l + 1)] + [0] * (L - l)
    return Filter(tuple(coeffs), l)


def b_vector(f: Filter) -> np.ndarray:
    """b_0 = sum a_q^2, b_k = 2 sum_q a_{q+k} a_q, so that Var(phi) = sum_k b_k rho(alpha k)."""
    a = f.a
    L = f.L
    b = np.empty(L + 1)
    b[0] = np.dot(a, a)
    for k in range(1, L + 1):
        b[k] = 2.0 * np.dot(a[k:], a[: L + 1 - k])
    return b


def cross_b_vector(f_i: Filter, f_j: Filter) -> np.ndarray:
    """b_k^{i,j} = sum_q a^i_q a^j_{q+k} + sum_q a^j_q a^i_{q+k}, k = 0..L.

    At ``k = 0`` and ``i = j`` this equals twice ``b_vector(f)[0]``.
    """
    if len(f_i.coeffs) != len(f_j.coeffs):
        raise ValidationError("filters must have equal length")
    ai, aj = f_i.a, f_j.a
    L = f_i.L
    return np.array(
        [np.dot(ai[: L + 1 - k], aj[k:]) + np.dot(aj[: L + 1 - k], ai[k:]) for k in range(L + 1)]
    )


def lagged_products(f_i: Filter, f_j: Filter) -> np.ndarray:
    """c_d = sum_q a^i_q a^j_{q+d} for d = -L..L (index d + L).

    Cov(phi_i(t), phi_j(t + p alpha)) = sum_d c_d rho(alpha |p - d|).
    """
    if len(f_i.coeffs) != len(f_j.coeffs):
        raise ValidationError("filters must have equal length")
    return np.correlate(f_j.a, f_i.a, mode="full")


def numerical_rank(B: np.ndarray, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(B, compute_uv=False)
    return int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0


@dataclass(frozen=True)
class FilterBank:
    filters: tuple
    alpha: float
    B: np.ndarray
    rank: int

    @property
    def L(self) -> int:
        return len(self.filters)

    @property
    def orders(self) -> list:
        return [f.order for f in self.filters]

    def lags(self) -> np.ndarray:
        """Lags alpha*k, k = 0..L, paired with the columns of B."""
        return self.alpha * np.arange(self.B.shape[1])

    def summary(self) -> dict:
        return {
            "L": self.L,
            "alpha": self.alpha,
            "orders": self.orders,
            "coeffs": [list(f.coeffs) for f in self.filters],
            "b_vectors": self.B.tolist(),
            "rank": self.rank,
        }


def make_filter_bank(filters, alpha: float, min_rank: int = 1) -> FilterBank:
    filters = tuple(filters)
    if not filters:
        raise ValidationError("a filter bank needs at least one filter")
    if alpha <= 0:
        raise ValidationError(f"alpha must be > 0, got {alpha}")
    lengths = {len(f.coeffs) for f in filters}
    if len(lengths) != 1:
        raise ValidationError(f"filters must share one length, got {sorted(lengths)}")
    B = np.vstack([b_vector(f) for f in filters])
    rank = numerical_rank(B)
    if not min_rank <= rank <= len(filters):
        raise ValidationError(f"rank(B) = {rank} violates {min_rank} <= rank(B) <= {len(filters)}")
    return FilterBank(filters, float(alpha), B, rank)


def build_filter_bank(n: int, alpha: float) -> FilterBank:
    """L = 2n+1 difference filters of orders 1..L, each of length L+1."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    L = 2 * n + 1
    filters = [finite_difference_filter(l, L) for l in range(1, L + 1)]
    return make_filter_bank(filters, alpha, min_rank=L)
