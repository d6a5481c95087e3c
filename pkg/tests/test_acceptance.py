"""Acceptance checks, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v``; a PASS/FAIL line per
criterion is printed in the terminal summary.
"""
import json
import math
import sys
import time

import numpy as np
import pytest

from epr_alloc.allocation import (NodeProfile, bell_number, brute_force_allocate,
                                  enumerate_m_partitions, enumerate_partitions,
                                  greedy_assignment, plan_objective, two_node_strategy_test)
from epr_alloc.cli import main
from epr_alloc.config import EXAMPLE_CONFIG
from epr_alloc.estimator import StatisticMatrix, fuse_batch, information_matrix
from epr_alloc.montecarlo import ExperimentConfig, run_experiment
from epr_alloc.risk import (CategoricalLogLoss, QuadraticEmbedding, epr_norm_matrix,
                            epr_quadratic, optimal_parameter, population_risk)
from epr_alloc.simplex import Distribution, InfoVector
from epr_alloc.verify import allocate_plan, permutation_minimum, random_partition


def random_instance(rng, max_k=4, max_m=2, max_alphabet=8):
    size = int(rng.integers(2, max_alphabet + 1))
    k = int(rng.integers(1, max_k + 1))
    m = int(rng.integers(1, min(max_m, size) + 1))
    lam = np.sort(rng.exponential(1.0, size))[::-1]
    lam[rng.random(size) < 0.15] = 0.0
    lam = np.sort(lam)[::-1]
    prof = NodeProfile(int(rng.integers(1, 101)), tuple(int(v) for v in rng.integers(1, 101, k)), m)
    return lam, prof


def test_oracle_equivalence(criterion):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        lam, prof = random_instance(rng)
        a = allocate_plan(lam, prof).objective
        b = brute_force_allocate(lam, prof).objective
        worst = max(worst, abs(a - b) / max(b, 1e-300))
    elapsed = time.perf_counter() - start
    criterion(1, worst <= 1e-12 and elapsed < 30,
              f"500 instances, max relative gap {worst:.1e}, {elapsed:.1f}s")


def test_greedy_assignment(criterion):
    rng = np.random.default_rng(102)
    start = time.perf_counter()
    bad = 0
    for _ in range(200):
        size = int(rng.integers(2, 7))
        k = int(rng.integers(1, size + 1))
        part = random_partition(rng, k)
        lam = np.sort(rng.exponential(1.0, size))[::-1]
        prof = NodeProfile(int(rng.integers(1, 101)), tuple(int(v) for v in rng.integers(1, 101, k)))
        bad += greedy_assignment(part, lam, prof).objective != permutation_minimum(lam, part, prof)
    elapsed = time.perf_counter() - start
    criterion(2, bad == 0 and elapsed < 10,
              f"{bad} mismatches against all |X|! orderings in 200 draws, {elapsed:.1f}s")


def test_single_and_two_node_rules(criterion):
    rng = np.random.default_rng(103)
    single_bad = 0
    for _ in range(500):
        size = int(rng.integers(2, 9))
        lam = np.sort(rng.exponential(1.0, size))[::-1]
        prof = NodeProfile(int(rng.integers(1, 101)), (int(rng.integers(1, 101)),))
        single_bad += allocate_plan(lam, prof).index_sets != ((1,),)
    agree = checked = 0
    while checked < 1000:
        size = int(rng.integers(2, 9))
        lam = np.sort(rng.exponential(1.0, size))[::-1]
        n0, n1, n2 = (int(v) for v in rng.integers(1, 101, 3))
        hi, lo = max(n1, n2), min(n1, n2)
        if lam[0] / lam[1] == (n0 + hi) * (n0 + hi + lo) / (n0 * (n0 + lo)):
            continue
        checked += 1
        plan = allocate_plan(lam, NodeProfile(n0, (n1, n2)))
        shared = plan.index_sets[0] == plan.index_sets[1]
        agree += (two_node_strategy_test(lam[0], lam[1], n0, n1, n2) == "shared") == shared
    criterion(3, single_bad == 0 and agree == 1000,
              f"single-node C1={{1}} failures {single_bad}/500; two-node agreement {agree}/1000")


def test_enumeration_counts(criterion):
    counts = [sum(1 for _ in enumerate_partitions(k)) for k in range(1, 9)]
    m_counts = [sum(1 for _ in enumerate_m_partitions(k, 2)) for k in (1, 2)]
    ok = counts == [1, 2, 5, 15, 52, 203, 877, 4140] == [bell_number(k) for k in range(1, 9)]
    ok &= m_counts == [1, 3]
    criterion(4, ok, f"Bell counts {counts}; m-partitions (1,2),(2,2) = {m_counts}")


def test_epr_norm_matrix(criterion):
    rng = np.random.default_rng(105)
    worst_null = worst_asym = 0.0
    min_eig = np.inf
    for t in range(200):
        size = int(rng.integers(2, 7))
        mass = rng.dirichlet(np.ones(size)) * (1 - 0.01 * size) + 0.01
        p = Distribution.from_probs(mass / mass.sum())
        if t % 2:
            model = CategoricalLogLoss(size)
        else:
            model = QuadraticEmbedding(rng.standard_normal((size, int(rng.integers(1, 5)))))
        h = epr_norm_matrix(model, p, optimal_parameter(model, p)).H
        worst_asym = max(worst_asym, float(np.abs(h - h.T).max()))
        min_eig = min(min_eig, float(np.linalg.eigvalsh(h).min()))
        worst_null = max(worst_null, float(np.linalg.norm(h @ np.sqrt(p.mass))))
    fixture = QuadraticEmbedding([[0.0], [1.0]])
    half = Distribution.from_probs([0.5, 0.5])
    hf = epr_norm_matrix(fixture, half, optimal_parameter(fixture, half)).H
    fixture_err = float(np.abs(hf - 0.125 * np.array([[1, -1], [-1, 1]])).max())
    ok = worst_asym <= 1e-12 and min_eig >= -1e-12 and worst_null <= 1e-8 and fixture_err <= 1e-12
    criterion(5, ok, f"200 matrices: asymmetry {worst_asym:.1e}, min eigenvalue {min_eig:.1e}, "
                     f"|H phi*| {worst_null:.1e}; fixture error {fixture_err:.1e}")


def test_local_risk_expansion(criterion):
    # 100 directions x 10 step sizes; log-log slope with a per-direction intercept
    rng = np.random.default_rng(106)
    xs, ys = [], []
    for _ in range(100):
        size = int(rng.integers(2, 7))
        mass = rng.dirichlet(np.ones(size) * 3) * (1 - 0.05 * size) + 0.05
        p = Distribution.from_probs(mass / mass.sum())
        model = CategoricalLogLoss(size)
        opt = optimal_parameter(model, p)
        H = epr_norm_matrix(model, p, opt)
        star = InfoVector.of_reference(p)
        d = rng.standard_normal(size)
        d -= d.mean()
        d /= np.abs(d).max()
        eps = np.geomspace(1e-3, 1e-2, 10)
        res = []
        for e in eps:
            q = Distribution.from_probs(p.mass + e * d)
            theta = optimal_parameter(model, q).theta
            excess = population_risk(model, p, theta) - opt.risk
            phi = InfoVector(p.alphabet, q.mass / np.sqrt(p.mass))
            res.append(abs(excess - epr_quadratic(H, phi, star)))
        lx, ly = np.log(eps), np.log(res)
        xs.append(lx - lx.mean())
        ys.append(ly - ly.mean())
    x, y = np.concatenate(xs), np.concatenate(ys)
    slope = float(x @ y / (x @ x))
    criterion(6, slope >= 2.7, f"1000 perturbations, eps in [1e-3, 1e-2], residual slope {slope:.3f}")


def test_estimator_efficiency(criterion):
    rng = np.random.default_rng(107)
    start = time.perf_counter()
    draws = 100_000
    worst_mean = worst_cov = 0.0
    for size, k, m in ((3, 1, 1), (5, 2, 2), (8, 3, 2)):
        star = np.sqrt(rng.dirichlet(np.ones(size)))
        n0 = int(rng.integers(20, 200))
        counts = [int(v) for v in rng.integers(20, 200, k)]
        mats = [StatisticMatrix(i + 1, np.linalg.qr(rng.standard_normal((size, m)))[0])
                for i in range(k)]
        phi0 = star + rng.standard_normal((draws, size)) / math.sqrt(n0)
        values = [(star + rng.standard_normal((draws, size)) / math.sqrt(n)) @ f.columns
                  for f, n in zip(mats, counts)]
        fused = fuse_batch(phi0, n0, values, mats, counts)
        ainv = np.linalg.inv(information_matrix(size, n0, mats, counts))
        se = fused.std(axis=0, ddof=1) / math.sqrt(draws)
        worst_mean = max(worst_mean, float(np.max(np.abs(fused.mean(axis=0) - star) / se)))
        cov = np.cov(fused, rowvar=False)
        worst_cov = max(worst_cov, float(np.linalg.norm(cov - ainv) / np.linalg.norm(ainv)))
    elapsed = time.perf_counter() - start
    criterion(7, worst_mean < 4 and worst_cov <= 0.03 and elapsed < 60,
              f"1e5 draws x 3 designs: mean within {worst_mean:.2f} SE, "
              f"covariance error {worst_cov:.4f}, {elapsed:.1f}s")


@pytest.mark.slow
def test_end_to_end_prediction(criterion):
    model = QuadraticEmbedding([[0.0], [1.0]])
    half = Distribution.from_probs([0.5, 0.5])
    cases = {
        "k=0": (NodeProfile(400), "baseline", None),
        "k=1": (NodeProfile(400, (400,)), "algorithm", None),
        "k=2 separate": (NodeProfile(400, (400, 400)), "explicit", ((1,), (2,))),
        "k=2 shared": (NodeProfile(400, (400, 400)), "explicit", ((1,), (1,))),
    }
    start = time.perf_counter()
    reports = {}
    for name, (prof, source, plan) in cases.items():
        cfg = ExperimentConfig(model, half, prof, plan_source=source, plan=plan, trials=20000, seed=0)
        reports[name] = run_experiment(cfg)
    elapsed = time.perf_counter() - start
    ratios = {name: r.ratio for name, r in reports.items()}
    within = all(abs(r - 1) <= 0.05 for r in ratios.values())
    lam = [0.25, 0.0]
    two = NodeProfile(400, (400, 400))
    predicted_order = plan_objective(lam, two, [[1], [1]]) < plan_objective(lam, two, [[1], [2]])
    emp = {name: r.empirical_epr for name, r in reports.items()}
    ranking = (predicted_order and emp["k=2 shared"] < emp["k=2 separate"]
               and emp["k=2 shared"] < emp["k=1"] < emp["k=0"])
    detail = ", ".join(f"{n} {r:.4f}" for n, r in ratios.items())
    criterion(8, within and ranking and elapsed < 120,
              f"empirical/predicted {detail}; ranking {'matches' if ranking else 'differs'}; "
              f"{elapsed:.1f}s")


def _strip(path):
    doc = json.loads(path.read_text())
    doc.pop("wall_time", None)
    return json.dumps(doc, sort_keys=True)


def test_determinism(criterion, tmp_path):
    doc = json.loads(json.dumps(EXAMPLE_CONFIG))
    doc["nodes"]["helpers"] = [400, 250]
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(doc))
    alloc = []
    for name in ("a1", "a2"):
        out = tmp_path / f"{name}.json"
        main(["allocate", "--config", str(cfg), "--out", str(out)])
        alloc.append(out.read_bytes())
    sims = []
    for name, threads in (("s1", 1), ("s2", 1), ("s3", 4)):
        out = tmp_path / name / "report.json"
        out.parent.mkdir()
        main(["simulate", "--config", str(cfg), "--trials", "2000", "--threads", str(threads),
              "--out", str(out)])
        sims.append((_strip(out), out.with_suffix(".trials.csv").read_bytes()))
    ok = alloc[0] == alloc[1] and sims[0] == sims[1] == sims[2]
    criterion(9, ok, "allocate reports byte-identical; simulate reports and CSVs identical "
                     "across runs and 1 vs 4 threads" if ok else "outputs differ")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
