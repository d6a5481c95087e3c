"""End-to-end simulation of the collaborative estimation pipeline.

Each trial samples every node, transmits the planned statistics, fuses them
at the target, turns the fused information vector back into a parameter and
records the exact excess population risk.  Averaging over trials gives the
empirical EPR, which is compared with ``tr(H A^{-1}) / 2``.

Random streams are keyed by ``(seed, trial_id, node)`` only, so different
plans run on the same samples (common random numbers) and the thread count
never changes the result.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .allocation import (AllocationPlan, Eigensystem, NodeProfile, allocate,
                         baseline_objective, brute_force_allocate, eigensystem,
                         plan_objective)
from .estimator import (StatisticMatrix, ml_fuse, predicted_mse, reconstruct_distribution,
                        transmit)
from .risk import (PINV_TOL, ConvergenceError, EprNormMatrix, LossModel, OptimalParameter,
                   epr_norm_matrix, optimal_parameter, population_risk, theta_perturbation)
from .simplex import Distribution, InfoVector, RandomSeed, info_vector, sample_empirical

log = logging.getLogger(__name__)

PLAN_SOURCES = ("algorithm", "brute-force", "explicit", "baseline")
THETA_METHODS = ("erm-resolve", "perturbation")
MAX_FLAGGED_FRACTION = 1e-3

__all__ = [
    "ExperimentConfig",
    "Setup",
    "TrialRecord",
    "SimulationReport",
    "prepare",
    "run_trial",
    "run_experiment",
    "compare_plans",
]


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    model: LossModel
    reference: Distribution
    profile: NodeProfile
    plan_source: str = "algorithm"
    plan: Optional[tuple] = None
    trials: int = 1000
    theta_method: str = "erm-resolve"
    seed: int = 0
    as_printed: bool = False
    tol: float = 1e-10
    max_iters: int = 200
    pinv_tolerance: float = PINV_TOL

    def __post_init__(self):
        if self.plan_source not in PLAN_SOURCES:
            raise ValueError(f"plan_source must be one of {PLAN_SOURCES}")
        if self.theta_method not in THETA_METHODS:
            raise ValueError(f"theta_method must be one of {THETA_METHODS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.plan_source == "explicit":
            if self.plan is None:
                raise ValueError("explicit plan_source needs a plan")
            plan = tuple(tuple(int(c) for c in cs) for cs in self.plan)
            if len(plan) != self.profile.k:
                raise ValueError(f"plan lists {len(plan)} helpers, profile has {self.profile.k}")
            for i, cs in enumerate(plan, start=1):
                if len(cs) != self.profile.m or len(set(cs)) != len(cs):
                    raise ValueError(f"helper {i} needs {self.profile.m} distinct eigen indices")
                if any(not 1 <= c <= self.reference.size for c in cs):
                    raise ValueError(f"helper {i} eigen index outside 1..{self.reference.size}")
            object.__setattr__(self, "plan", plan)
        self.reference.require_reference()
        RandomSeed(self.seed)

    def to_dict(self) -> dict:
        return {
            "model": self.model.spec(),
            "probabilities": self.reference.mass.tolist(),
            "n0": self.profile.n0,
            "helpers": list(self.profile.helpers),
            "m": self.profile.m,
            "plan_source": self.plan_source,
            "plan": None if self.plan is None else [list(c) for c in self.plan],
            "trials": self.trials,
            "theta_method": self.theta_method,
            "seed": self.seed,
            "as_printed_estimator": self.as_printed,
            "tol": self.tol,
            "max_iters": self.max_iters,
            "pinv_tolerance": self.pinv_tolerance,
        }

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class Setup:
    """Everything a trial needs that does not depend on the samples."""

    opt: OptimalParameter
    H: EprNormMatrix
    eigs: Eigensystem
    plan: AllocationPlan
    matrices: tuple
    predicted_epr: float
    baseline_epr: float


def _resolve_plan(config: ExperimentConfig, eigs: Eigensystem) -> AllocationPlan:
    profile = config.profile
    if config.plan_source == "baseline":
        return AllocationPlan((), baseline_objective(eigs.lambdas, profile.n0))
    if config.plan_source == "algorithm":
        return allocate(eigs, profile)
    if config.plan_source == "brute-force":
        return brute_force_allocate(eigs, profile)
    obj = plan_objective(eigs.lambdas, profile, config.plan)
    return AllocationPlan(config.plan, obj).with_matrices(eigs)


def prepare(config: ExperimentConfig) -> Setup:
    opt = optimal_parameter(config.model, config.reference, config.tol, config.max_iters)
    H = epr_norm_matrix(config.model, config.reference, opt, config.pinv_tolerance)
    eigs = eigensystem(H)
    plan = _resolve_plan(config, eigs)
    mats = tuple(StatisticMatrix(i, f) for i, f in
                 enumerate(plan.statistic_matrices(eigs), start=1))
    helpers = config.profile.helpers if plan.k else ()
    profile = NodeProfile(config.profile.n0, helpers, config.profile.m)
    pred = predicted_mse(H, [f.columns for f in mats], profile) / 2
    base = H.trace / (2 * config.profile.n0)
    return Setup(opt, H, eigs, plan, mats, pred, base)


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    excess_risk: float
    phi_dist: float
    mass_defect: float
    flagged: bool = False


def _stream(config: ExperimentConfig, trial_id: int, node: int) -> RandomSeed:
    return RandomSeed(config.seed).child(trial_id, node)


def run_trial(config: ExperimentConfig, trial_id: int, setup: Optional[Setup] = None) -> TrialRecord:
    if setup is None:
        setup = prepare(config)
    p = config.reference
    profile = config.profile
    phi_star = InfoVector.of_reference(p)

    q0 = sample_empirical(p, profile.n0, _stream(config, trial_id, 0))
    phi0 = info_vector(p, q0)
    stats = []
    for f in setup.matrices:
        n_i = profile.helpers[f.helper_id - 1]
        qi = sample_empirical(p, n_i, _stream(config, trial_id, f.helper_id))
        stats.append(transmit(f, info_vector(p, qi), n_i))
    fused = ml_fuse(phi0, profile.n0, stats, setup.matrices, as_printed=config.as_printed)
    phi_dist = float(np.sum((fused.phi_tilde - phi_star) ** 2))

    try:
        q_hat, defect = reconstruct_distribution(fused.phi_tilde, p)
    except ValueError:
        log.warning("trial %d: reconstruction has no positive mass", trial_id)
        return TrialRecord(trial_id, float("nan"), phi_dist, float("nan"), True)

    if config.theta_method == "perturbation":
        theta = theta_perturbation(config.model, p, setup.opt, fused.phi_tilde, setup.H)
    else:
        try:
            theta = optimal_parameter(config.model, q_hat, config.tol, config.max_iters).theta
        except ConvergenceError as exc:
            log.warning("trial %d: ERM failed: %s", trial_id, exc)
            return TrialRecord(trial_id, float("nan"), phi_dist, defect, True)
    excess = population_risk(config.model, p, theta) - setup.opt.risk
    return TrialRecord(trial_id, excess, phi_dist, defect)


@dataclass(eq=False)
class SimulationReport:
    config_hash: str
    predicted_epr: float
    baseline_epr: float
    empirical_epr: float
    empirical_se: float
    records: list = field(repr=False)
    plan: AllocationPlan = None
    lambdas: np.ndarray = None
    n_flagged: int = 0
    wall_time: float = 0.0

    @property
    def ratio(self) -> float:
        return self.empirical_epr / self.predicted_epr if self.predicted_epr else float("nan")

    @property
    def quality_ok(self) -> bool:
        return self.n_flagged <= MAX_FLAGGED_FRACTION * len(self.records)

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "predicted_epr": self.predicted_epr,
            "baseline_epr": self.baseline_epr,
            "empirical_epr": self.empirical_epr,
            "empirical_se": self.empirical_se,
            "ratio": self.ratio,
            "trials": len(self.records),
            "flagged": self.n_flagged,
            "quality_ok": self.quality_ok,
            "plan": self.plan.to_dict() if self.plan is not None else None,
            "eigenvalues": None if self.lambdas is None else [float(v) for v in self.lambdas],
            "wall_time": self.wall_time,
        }


def _run_chunk(config, setup, ids):
    return [run_trial(config, t, setup) for t in ids]


def run_experiment(config: ExperimentConfig, threads: Optional[int] = None,
                   setup: Optional[Setup] = None) -> SimulationReport:
    """Run ``config.trials`` trials and aggregate them in trial-id order."""
    start = time.perf_counter()
    if setup is None:
        setup = prepare(config)
    ids = list(range(config.trials))
    threads = max(1, threads or 1)
    if threads == 1:
        records = _run_chunk(config, setup, ids)
    else:
        size = -(-len(ids) // (threads * 4))
        chunks = [ids[i:i + size] for i in range(0, len(ids), size)]
        with ThreadPoolExecutor(threads) as pool:
            records = [r for part in pool.map(lambda c: _run_chunk(config, setup, c), chunks)
                       for r in part]
    good = np.array([r.excess_risk for r in records if not r.flagged])
    n_flagged = len(records) - len(good)
    mean = float(good.mean()) if len(good) else float("nan")
    se = float(good.std(ddof=1) / np.sqrt(len(good))) if len(good) > 1 else float("nan")
    return SimulationReport(
        config_hash=config.config_hash,
        predicted_epr=setup.predicted_epr,
        baseline_epr=setup.baseline_epr,
        empirical_epr=mean,
        empirical_se=se,
        records=records,
        plan=setup.plan,
        lambdas=setup.eigs.lambdas,
        n_flagged=n_flagged,
        wall_time=time.perf_counter() - start,
    )


def compare_plans(config: ExperimentConfig, plans: Sequence, threads: Optional[int] = None) -> list:
    """Simulate several plans on common random numbers, best empirical EPR first.

    Each entry of ``plans`` is a plan source name (``"algorithm"``,
    ``"brute-force"``, ``"baseline"``), an AllocationPlan, or a sequence of
    per-helper eigen-index sets.  Returns ``[(label, report), ...]``.
    """
    if len(plans) < 2:
        raise ValueError("need at least two plans to compare")
    out = []
    for entry in plans:
        if isinstance(entry, str):
            cfg = dataclasses.replace(config, plan_source=entry, plan=None)
            label = entry
        else:
            sets = entry.index_sets if isinstance(entry, AllocationPlan) else entry
            cfg = dataclasses.replace(config, plan_source="explicit", plan=tuple(sets))
            label = "explicit " + str([list(c) for c in cfg.plan])
        out.append((label, run_experiment(cfg, threads)))
    # stable sort keeps input order on ties
    return sorted(out, key=lambda lr: lr[1].empirical_epr)
