"""
Asymptotic covariance and injectivity checks
============================================

Compute the sandwich covariance for the classical OU case and look at the
principal-minor probe of the lag-gradient matrix.
"""

import numpy as np

import mmfou
from mmfou.asymptotics import asymptotic_report, consistency_check
from mmfou.filters import build_filter_bank

theta = mmfou.ParameterVector(mmfou.lambda_consistency_bound(0.0), (0.5,), (1.0,))
bank = build_filter_bank(1, 0.01)
rep = asymptotic_report(theta, bank)
print("Lambda truncated at P =", rep.truncation_P)
print("C G =\n", np.round(rep.C @ rep.G, 10))
print("standard errors at N = 1000:", rep.standard_errors(1000))

# each principal minor of the gradient matrix, with and without axis flips
chk = consistency_check(theta, 0.005)
print("P-matrix:", chk.ok, " after flipping", chk.signs, ":", chk.p_matrix_reflected)
for m in chk.minors:
    print(m["indices"], f"{m['value']:+.4e}")
for w in chk.warnings:
    print("note:", w)

# the normality preconditions depend on the filter orders and H_sup
print(mmfou.check_normality_conditions([1, 2, 3], 0.9))
print(mmfou.check_normality_conditions([0, 1, 2], 0.8))
