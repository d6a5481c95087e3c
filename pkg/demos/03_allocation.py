"""
Choosing what each helper sends
===============================

Helpers send projections of their empirical vectors onto eigenvectors of H.
The search runs over set partitions of the helpers; inside a partition the
largest eigenvalue goes to the group with the most samples.
"""
# %%
import numpy as np

from epr_alloc import (Eigensystem, NodeProfile, allocate, baseline_objective, brute_force_allocate,
                       enumerate_m_partitions, enumerate_partitions, plan_objective,
                       two_node_strategy_test)


def eigs(*lam):
    return Eigensystem(np.array(lam, dtype=float), np.eye(len(lam)))


# %%
# Two equal helpers: send the same direction, or two different ones?
prof = NodeProfile(1, (1, 1))
for lam in ((4, 1), (2, 1)):
    print(lam, "separate", plan_objective(lam, prof, [[1], [2]]),
          "shared", round(plan_objective(lam, prof, [[1], [1]]), 4),
          "->", two_node_strategy_test(*lam, 1, 1, 1))

# %%
print([p.groups for p in enumerate_partitions(3)])
print([p.groups for p in enumerate_m_partitions(2, 2)])

# %%
# Two-dimensional statistics from two helpers.
plan = allocate(eigs(4, 1, 0.5, 0.25), NodeProfile(1, (1, 1), m=2))
print("plan", plan.index_sets, "objective", round(plan.objective, 4))
print("brute force agrees:",
      brute_force_allocate(eigs(4, 1, 0.5, 0.25), NodeProfile(1, (1, 1), m=2)).objective)

# %%
# Unequal sample sizes.
prof = NodeProfile(50, (200, 120, 30, 10))
plan_lams = (3.0, 1.5, 0.4, 0.1, 0.0)
plan = allocate(eigs(*plan_lams), prof)
print("plan", plan.index_sets, "EPR", round(plan.epr, 5),
      "baseline", baseline_objective(plan_lams, prof.n0) / 2)
