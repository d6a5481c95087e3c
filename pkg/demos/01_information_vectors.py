"""
Information vectors and the local KL approximation
==================================================

A distribution Q near a reference P is represented by phi(x) = Q(x)/sqrt(P(x)).
Close to P, KL divergence is half the squared distance between such vectors.
"""
# %%
import numpy as np

from epr_alloc import (Distribution, InfoVector, RandomSeed, info_vector, kl_exact, kl_local,
                       sample_empirical)

p = Distribution.from_probs([0.2, 0.3, 0.5])
star = InfoVector.of_reference(p)
print("phi* =", star.coords)

# %%
# Shrink a perturbation and watch the two divergences agree to third order.
direction = np.array([1.0, 0.5, -1.5])
for eps in (0.05, 0.01, 0.002):
    q = Distribution.from_probs(p.mass + eps * direction / 1.5)
    local = kl_local(info_vector(p, q), star)
    exact = kl_exact(q, p)
    print(f"eps={eps:<6} local={local:.3e} exact={exact:.3e} gap={abs(local - exact):.1e}")

# %%
# The empirical vector of n samples scatters around phi* with covariance
# (I - phi* phi*^T)/n: unit variance per sample in every direction except
# phi* itself, along which the total mass is pinned to 1.
n = 500
draws = np.array([info_vector(p, sample_empirical(p, n, RandomSeed(7, s))).coords
                  for s in range(4000)])
print("mean offset  ", draws.mean(axis=0) - star.coords)
print("n * variance ", n * draws.var(axis=0), " vs 1 - P =", 1 - p.mass)
