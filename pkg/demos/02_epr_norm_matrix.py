"""
The EPR norm matrix
===================

For a loss l(x; theta) the excess population risk of a parameter fitted on
a slightly perturbed distribution is, to second order, a quadratic form
in phi - phi*.  This script builds that matrix for the two built-in models.
"""
# %%
import numpy as np

from epr_alloc import (CategoricalLogLoss, Distribution, InfoVector, QuadraticEmbedding,
                       epr_norm_matrix, epr_quadratic, optimal_parameter, population_risk)

half = Distribution.from_probs([0.5, 0.5])
model = QuadraticEmbedding([[0.0], [1.0]])
opt = optimal_parameter(model, half)
H = epr_norm_matrix(model, half, opt)
print("theta* =", opt.theta, " risk =", opt.risk)
print("H =\n", H.H)
print("H phi* =", H.H @ H.phi_star.coords)

# %%
# Log loss over a categorical model: the matrix is the projector that removes
# the phi* direction, so its quadratic form is the local KL divergence itself.
p = Distribution.from_probs([0.1, 0.2, 0.3, 0.4])
logloss = CategoricalLogLoss(4)
Hc = epr_norm_matrix(logloss, p, optimal_parameter(logloss, p))
s = np.sqrt(p.mass)
print("max |H - (I - s s^T)| =", np.abs(Hc.H - (np.eye(4) - np.outer(s, s))).max())

# %%
# Compare the quadratic prediction with the exact excess risk of refitting.
star = InfoVector.of_reference(p)
base = optimal_parameter(logloss, p).risk
d = np.array([1.0, -2.0, 0.5, 0.5])
for eps in (0.02, 0.005):
    q = Distribution.from_probs(p.mass + eps * d / 2)
    theta = optimal_parameter(logloss, q).theta
    exact = population_risk(logloss, p, theta) - base
    approx = epr_quadratic(Hc, InfoVector(p.alphabet, q.mass / s), star)
    print(f"eps={eps}: exact {exact:.4e}  quadratic {approx:.4e}")
