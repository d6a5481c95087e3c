"""Eigenvector allocation of one-shot statistics for collaborative estimation."""

__version__ = "0.1.0"

from .simplex import (Alphabet, Distribution, InfoVector, RandomSeed, gaussian_log_density,
                      info_vector, kl_exact, kl_local, sample_empirical)
from .risk import (CategoricalLogLoss, ConvergenceError, EprNormMatrix, LossModel,
                   OptimalParameter, QuadraticEmbedding, UserLoss, check_derivatives,
                   epr_norm_matrix, epr_quadratic, optimal_parameter, population_risk,
                   theta_perturbation)
from .allocation import (AllocationPlan, Eigensystem, InfeasibleError, NodeProfile, Partition,
                         allocate, baseline_objective, bell_number, brute_force_allocate,
                         eigensystem, enumerate_m_partitions, enumerate_partitions,
                         greedy_assignment, plan_objective, two_node_strategy_test)
from .estimator import (FusedEstimate, StatisticMatrix, TransmittedStatistic, fuse_batch,
                        ml_fuse, predicted_mse, reconstruct_distribution, transmit)
from .montecarlo import (ExperimentConfig, SimulationReport, TrialRecord, compare_plans,
                         prepare, run_experiment, run_trial)
