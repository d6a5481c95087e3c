"""
Fusing helper statistics at the target
======================================

The target combines its own empirical vector with the helpers' projected
statistics, each weighted by its sample count.  The result is unbiased and
its covariance is the inverse information matrix.
"""
# %%
import numpy as np

from epr_alloc import (Distribution, InfoVector, NodeProfile, QuadraticEmbedding, StatisticMatrix,
                       TransmittedStatistic, eigensystem, epr_norm_matrix, fuse_batch, ml_fuse,
                       optimal_parameter, predicted_mse)
from epr_alloc.estimator import information_matrix

half = Distribution.from_probs([0.5, 0.5])
f = StatisticMatrix(1, [1.0, 0.0])
out = ml_fuse(InfoVector(half.alphabet, np.array([0.8, 0.6])), 1,
              [TransmittedStatistic(1, np.array([0.6]), 1)], [f])
print("fused:", out.phi_tilde.coords)

# %%
# Sampling check of unbiasedness and covariance.
rng = np.random.default_rng(0)
star = np.sqrt([0.2, 0.3, 0.5])
mats = [StatisticMatrix(1, np.linalg.qr(rng.standard_normal((3, 1)))[0]),
        StatisticMatrix(2, np.linalg.qr(rng.standard_normal((3, 2)))[0])]
n0, counts, draws = 50, [80, 200], 50_000
phi0 = star + rng.standard_normal((draws, 3)) / np.sqrt(n0)
values = [(star + rng.standard_normal((draws, 3)) / np.sqrt(n)) @ m.columns
          for m, n in zip(mats, counts)]
fused = fuse_batch(phi0, n0, values, mats, counts)
print("bias      ", fused.mean(axis=0) - star)
print("cov error ", np.abs(np.cov(fused, rowvar=False)
                           - np.linalg.inv(information_matrix(3, n0, mats, counts))).max())

# %%
# Predicted risk for the fixture model with one helper sending v1.
model = QuadraticEmbedding([[0.0], [1.0]])
H = epr_norm_matrix(model, half, optimal_parameter(model, half))
v = eigensystem(H).vectors[:, :1]
print("tr(H A^-1) =", predicted_mse(H, [v], NodeProfile(100, (100,))))
