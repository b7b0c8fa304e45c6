"""
Covariance and spectrum of a fractional OU mixture
==================================================

Evaluate the stationary autocovariance in both forms, compare them at
short lags, and check the spectral density against the variance.
"""

import numpy as np
from scipy.integrate import quad

import mmfou

# three components sharing one mean-reversion rate
lam = mmfou.lambda_consistency_bound(0.0)
theta = mmfou.ParameterVector(lam, (0.3, 0.5, 0.7), (0.5, 1.0, 1.5))
print(theta)

t = np.array([0.0, 1e-3, 1e-2, 0.1, 1.0, 5.0])
exact = mmfou.acov(theta, t, mode="exact")
small = mmfou.acov(theta, t, mode="small_lag")
for ti, a, b in zip(t, exact, small):
    print(f"t={ti:<6g} exact={a:.8f} small-lag={b:.8f} diff={a - b:+.2e}")

# the small-lag form only drops terms that vanish as t -> 0
print("variance:", exact[0])

# integrating the spectral density over the line gives the variance back
one = mmfou.ParameterVector(1.0, (0.3,), (1.0,))
f = lambda x: mmfou.sdf(one, x)
total = 2 * (quad(f, 0, 1, limit=200)[0] + quad(f, 1, np.inf, limit=200)[0])
print("integral of sdf:", total, "  acov(0):", mmfou.acov(one, 0.0, mode="exact"))

# sampled on a grid of step alpha the spectrum folds onto [-pi/alpha, pi/alpha]
ou = mmfou.ParameterVector(1.0, (0.5,), (1.0,))
print("folded OU at 0, truncated:", mmfou.sdf_folded(ou, 0.0, 1.0))
print("folded OU at 0, with tail:", mmfou.sdf_folded(ou, 0.0, 1.0, tail=True))
print("closed form coth(1/2)/(4 pi):", 1 / (np.tanh(0.5) * 4 * np.pi))

# for H well below 1/2 the shells decay too slowly to truncate, use the tail sum
for x in (0.5, 1.0, 3.0):
    print(f"x={x}: sdf={mmfou.sdf(one, x):.6f}  folded={mmfou.sdf_folded(one, x, 1.0, tail=True):.6f}")
