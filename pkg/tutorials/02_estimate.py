"""
Simulating paths and fitting them by moments
============================================

Draw one path of a two-component mixture, build the difference-filter
bank, and fit theta by minimizing the moment discrepancy.
"""

import numpy as np

import mmfou
from mmfou.filters import build_filter_bank
from mmfou.gmm import EstimateOptions, GmmProblem, model_variances, sample_moments, solve

theta = mmfou.ParameterVector(0.5, (0.3, 0.7), (0.8, 1.2))
cfg = mmfou.SimulationConfig(N=2000, T=200.0, seed=7)
path = mmfou.mmfou_path(theta, cfg)
print("alpha =", path.alpha, " points =", path.values.size)
print("lambda*alpha =", path.meta["lambda_alpha"], " warnings:", path.meta["warnings"])

# filters of orders 1..2n+1 and their mean squares
bank = build_filter_bank(theta.n, path.alpha)
s = sample_moments(path, bank)
V = model_variances(theta, bank, "exact")
print("sample moments:", np.round(s, 5))
print("model at truth:", np.round(V, 5))

# lambda only enters through the exact covariance, and it is only felt
# once lambda * alpha is not tiny
space = mmfou.ParameterSpace.default(theta.n, H_bounds=(0.25, 0.95))
res = mmfou.estimate(path, space, EstimateOptions(acov_mode="exact"))
# one path pins the moments to a few percent, which leaves five parameters loose
print("estimate:", res.theta_hat)
print("objective:", res.objective_value, " converged:", res.converged)

# with population moments in place of sample ones the truth is recovered
exact_problem = GmmProblem(bank, V, space, acov_mode="exact")
print("noise-free fit:", solve(exact_problem, EstimateOptions(acov_mode="exact")).theta_hat)
