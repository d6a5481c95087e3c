"""
Simulating the whole pipeline
=============================

Every trial samples all nodes, transmits, fuses, refits the parameter and
records the true excess risk.  The mean over trials should match the
prediction.  Plans are compared on the same random samples.
"""
# %%
from epr_alloc import (Distribution, ExperimentConfig, NodeProfile, QuadraticEmbedding,
                       compare_plans, run_experiment)

model = QuadraticEmbedding([[0.0], [1.0]])
half = Distribution.from_probs([0.5, 0.5])

cfg = ExperimentConfig(model, half, NodeProfile(400, (400,)), trials=4000, seed=1)
rep = run_experiment(cfg)
print(f"predicted {rep.predicted_epr:.3e} empirical {rep.empirical_epr:.3e} "
      f"+- {rep.empirical_se:.1e} (ratio {rep.ratio:.3f})")

# %%
two = ExperimentConfig(model, half, NodeProfile(400, (400, 400)), trials=4000, seed=1)
for label, r in compare_plans(two, ["algorithm", [[1], [2]], "baseline"]):
    print(f"{label:<24} empirical {r.empirical_epr:.3e}  predicted {r.predicted_epr:.3e}")
