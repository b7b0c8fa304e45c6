import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmfou.errors import DomainError
from mmfou.special import (
    digamma,
    gamma_lower_exp,
    gamma_upper_scaled,
    incomplete_gamma_bracket,
    ln_gamma,
)

# (alpha, x, gamma_lower_exp, gamma_upper_scaled) from 40-digit mpmath
# (hyp1f1 for the lower, gammainc for the upper function)
ORACLE = [
    (-0.9, 0.01, 6.035053995080391, -6.291456687857855),
    (-0.9, 0.1, 0.08001842006925267, -0.644363022339099),
    (-0.9, 1.0, -0.8929118095907826, -0.03952878059091563),
    (-0.9, 5.0, -2.0943609956916576, -0.003331272143922749),
    (-0.9, 30.0, -1689499829.561561, -0.00013914558382860435),
    (-0.9, 100.0, -4.109307220088319e+38, -1.4716537364703232e-05),
    (-0.5, 0.01, 5.585382657125985, -4.745438855508437),
    (-0.5, 0.1, 1.602677614813705, -1.0605456776751556),
    (-0.5, 1.0, -0.11679946603380065, -0.13660600739194928),
    (-0.5, 5.0, -5.881022909694438, -0.01998695782555093),
    (-0.5, 30.0, -19350593572.041416, -0.0016373604325582828),
    (-0.5, 100.0, -7.699731939839313e+39, -0.00027796561095304285),
    (-0.1, 0.01, 1.4814575137166575, -0.4896251812163597),
    (-0.1, 0.1, 1.1646689642143164, -0.2109350956885583),
    (-0.1, 1.0, 0.8006155582480399, -0.05340389373499194),
    (-0.1, 5.0, -2.3514006865375947, -0.013375583974787235),
    (-0.1, 30.0, -24661332961.91224, -0.002143713151449052),
    (-0.1, 100.0, -1.6049996380532935e+40, -0.0005840739834654536),
    (0.1, 0.01, 0.6638271263842204, 0.3407694527536238),
    (0.1, 0.1, 0.8427416093849586, 0.19058478017903557),
    (0.1, 1.0, 1.1786404718842316, 0.06558492002026214),
    (0.1, 5.0, 5.759232326164585, 0.021362436639271672),
    (0.1, 30.0, 54301480742.821144, 0.004784085226472383),
    (0.1, 100.0, 4.519334635193041e+40, 0.0016512233479658094),
    (0.5, 0.01, 0.1132151741695998, 0.8964569799691267),
    (0.5, 0.1, 0.3690844725957565, 0.7235784384776155),
    (0.5, 1.0, 1.6504257587975428, 0.427583576155807),
    (0.5, 5.0, 43.32762975244078, 0.23232629437646507),
    (0.5, 30.0, 1120126444617.231, 0.10136909344029227),
    (0.5, 100.0, 1.5243074227086696e+42, 0.05614099274382259),
    (0.9, 0.01, 0.01655730722267957, 0.9934841432084206),
    (0.9, 0.1, 0.13730594099085167, 0.9671405158848991),
    (0.9, 1.0, 1.7430947342680705, 0.8823748271778808),
    (0.9, 5.0, 120.58708640307626, 0.7832901997837768),
    (0.9, 30.0, 7141637262264.976, 0.6638360610958409),
    (0.9, 100.0, 1.5887673602299896e+43, 0.5898523827847927),
]


@pytest.mark.parametrize("a,x,lower,upper", ORACLE)
def test_incomplete_gammas_match_high_precision(a, x, lower, upper):
    assert gamma_lower_exp(a, x) == pytest.approx(lower, rel=1e-11)
    assert gamma_upper_scaled(a, x) == pytest.approx(upper, rel=1e-11)


def test_ln_gamma_values():
    assert ln_gamma(1.0) == 0.0
    assert abs(ln_gamma(2.0)) < 1e-15
    assert ln_gamma(0.5) == pytest.approx(0.5 * math.log(math.pi), rel=1e-14)


def test_digamma_values():
    assert digamma(1.0) == pytest.approx(-0.5772156649015329, abs=1e-14)
    assert digamma(2.0) == pytest.approx(1 - 0.5772156649015329, abs=1e-14)
    assert digamma(0.5) == pytest.approx(-0.5772156649015329 - 2 * math.log(2), abs=1e-14)


@pytest.mark.parametrize("z", [0.1, 0.5, 1.0, 2.0, 5.0])
def test_digamma_recurrence(z):
    assert abs(digamma(z + 1) - digamma(z) - 1 / z) < 1e-10


def test_digamma_increasing():
    z = np.linspace(0.1, 10, 400)
    assert np.all(np.diff(digamma(z)) > 0)


@pytest.mark.parametrize("f", [ln_gamma, digamma])
@pytest.mark.parametrize("z", [0.0, -1.0, float("nan"), float("inf")])
def test_gamma_family_rejects_bad_arguments(f, z):
    with pytest.raises(DomainError):
        f(z)


def test_zero_argument_conventions():
    assert gamma_lower_exp(0.5, 0.0) == 0.0
    assert gamma_lower_exp(-0.5, 0.0) == 0.0
    assert gamma_upper_scaled(0.5, 0.0) == 1.0
    assert gamma_upper_scaled(-0.5, 0.0) == math.inf


def test_lower_at_one_against_quadrature():
    from scipy.integrate import quad

    ref = quad(lambda s: math.exp(s), 0, 1, weight="alg", wvar=(-0.5, 0))[0] / math.sqrt(math.pi)
    assert gamma_lower_exp(0.5, 1.0) == pytest.approx(ref, rel=1e-10)


def test_upper_large_argument_leading_term():
    x = 50.0
    lead = x ** -0.5 / math.sqrt(math.pi)
    # asymptotic series 1 + (a-1)/x + (a-1)(a-2)/x^2 + ...
    series = 1 - 0.5 / x + 0.75 / x**2 - 1.875 / x**3
    assert gamma_upper_scaled(0.5, x) == pytest.approx(lead * series, rel=1e-6)


def test_upper_negative_order_sign():
    from scipy.integrate import quad

    integral = quad(lambda s: s**-1.5 * math.exp(-s), 1, np.inf)[0]
    ref = math.e * integral / math.gamma(-0.5)
    assert ref < 0
    assert gamma_upper_scaled(-0.5, 1.0) == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("a", [0.3, -0.3])
def test_scaled_upper_finite_where_exponential_overflows(a):
    x = np.array([300.0, 700.0, 710.0, 1e4])
    v = gamma_upper_scaled(a, x)
    assert np.all(np.isfinite(v))
    ref700 = {0.3: 0.003404857099815667, -0.3: -4.617383459054291e-05}[a]
    assert v[1] == pytest.approx(ref700, rel=1e-12)


@pytest.mark.parametrize("a", [-1.0, 0.0, 1.0, 1.5, float("nan")])
def test_order_outside_domain_rejected(a):
    with pytest.raises(DomainError):
        gamma_lower_exp(a, 1.0)
    with pytest.raises(DomainError):
        gamma_upper_scaled(a, 1.0)


def test_negative_x_rejected():
    with pytest.raises(DomainError):
        gamma_lower_exp(0.5, -1.0)
    with pytest.raises(DomainError):
        gamma_upper_scaled(0.5, [1.0, -0.1])


def test_array_shape_preserved():
    x = np.linspace(0, 3, 12).reshape(3, 4)
    assert gamma_lower_exp(0.4, x).shape == (3, 4)
    assert gamma_upper_scaled(0.4, x).shape == (3, 4)
    assert isinstance(gamma_upper_scaled(0.4, 1.0), float)


@given(a=st.floats(0.02, 0.98), x=st.floats(1e-3, 40.0))
def test_lower_upper_complement(a, x):
    # gamma*(a,x) with e^{-s} is 1 - Gamma_a(x); the e^{+s} version is bounded below by it
    up = gamma_upper_scaled(a, x) * math.exp(-x)
    lower_minus = 1.0 - up
    assert 0.0 <= lower_minus <= 1.0 + 1e-12
    assert gamma_lower_exp(a, x) >= lower_minus - 1e-12


@given(a=st.floats(-0.98, 0.98).filter(lambda v: abs(v) > 1e-3), x=st.floats(1e-4, 50.0))
def test_bracket_continuous_in_order(a, x):
    v, _ = incomplete_gamma_bracket(a, x)
    w, _ = incomplete_gamma_bracket(a + 1e-7, x)
    assert np.isfinite(v)
    assert abs(w - v) < 1e-4 * max(1.0, abs(v)) * max(1.0, math.exp(x) / x)


def test_bracket_reduces_at_zero_order():
    x = np.linspace(0, 3, 13)
    v0, _ = incomplete_gamma_bracket(0.0, x)
    assert np.allclose(v0, 2 * np.exp(-x), rtol=0, atol=0)
    for eps in (1e-6, -1e-6):
        v, _ = incomplete_gamma_bracket(eps, x)
        assert np.allclose(v, v0, rtol=1e-4)
