"""Self-checks comparing the fast paths against independent oracles.

Each check takes a seeded generator and the size bounds and returns
``(passed, detail)``.  ``run_checks`` runs them all; the command-line
``verify`` subcommand prints the resulting table.
"""
from __future__ import annotations

import itertools
import math
from typing import Optional

import numpy as np

from .allocation import (Eigensystem, InfeasibleError, NodeProfile, Partition, allocate,
                         bell_number, brute_force_allocate, enumerate_m_partitions,
                         enumerate_partitions, greedy_assignment, two_node_strategy_test)
from .estimator import StatisticMatrix, fuse_batch, information_matrix
from .risk import CategoricalLogLoss, QuadraticEmbedding, epr_norm_matrix, optimal_parameter
from .simplex import Distribution

FAULTS = ("greedy-assignment",)


def random_lambdas(rng, size) -> np.ndarray:
    lam = np.sort(rng.exponential(1.0, size))[::-1]
    # occasionally exercise zero eigenvalues
    if size > 2 and rng.random() < 0.3:
        lam[-1] = 0.0
    return lam


def random_profile(rng, k, m, lo=1, hi=100) -> NodeProfile:
    return NodeProfile(int(rng.integers(lo, hi + 1)),
                       tuple(int(v) for v in rng.integers(lo, hi + 1, size=k)), m)


def random_partition(rng, k) -> Partition:
    labels = []
    top = -1
    for _ in range(k):
        b = int(rng.integers(0, top + 2))
        labels.append(b)
        top = max(top, b)
    blocks = [[i + 1 for i, b in enumerate(labels) if b == g] for g in range(top + 1)]
    return Partition.of(blocks)


def permutation_minimum(lambdas, partition: Partition, profile: NodeProfile) -> float:
    """Minimum over every ordering of the eigenvalues across the partition's groups."""
    size = len(lambdas)
    denom = [profile.n0 + profile.group_total(g) for g in partition.groups]
    denom += [profile.n0] * (size - len(denom))
    return min(math.fsum(float(lambdas[p]) / d for p, d in zip(perm, denom))
               for perm in itertools.permutations(range(size)))


def m_partitions_oracle(k: int, m: int) -> int:
    """Count m-fold partitions by filtering all multisets of non-empty subsets."""
    subsets = [s for r in range(1, k + 1) for s in itertools.combinations(range(k), r)]
    count = 0
    for size in range(m, m * k + 1):
        for multiset in itertools.combinations_with_replacement(subsets, size):
            cover = [0] * k
            for s in multiset:
                for i in s:
                    cover[i] += 1
            count += all(c == m for c in cover)
    return count


def check_allocate_vs_brute_force(rng, max_k=4, max_m=2, max_alphabet=8, instances=200, **_):
    worst = 0.0
    skipped = 0
    for _ in range(instances):
        size = int(rng.integers(2, max_alphabet + 1))
        k = int(rng.integers(1, max_k + 1))
        m = int(rng.integers(1, min(max_m, size) + 1))
        lam = random_lambdas(rng, size)
        prof = random_profile(rng, k, m)
        try:
            b = brute_force_allocate(lam, prof).objective
        except InfeasibleError:
            skipped += 1
            continue
        a = allocate_plan(lam, prof).objective
        worst = max(worst, abs(a - b) / max(abs(b), 1e-300))
    detail = f"max relative gap {worst:.2e} over {instances - skipped} instances"
    if skipped:
        detail += f" ({skipped} over the brute-force guard skipped)"
    return worst <= 1e-12, detail


def allocate_plan(lam, profile):
    """``allocate`` on bare eigenvalues (eigenvectors taken as the standard basis)."""
    return allocate(Eigensystem(np.asarray(lam, dtype=float), np.eye(len(lam))), profile)


def check_greedy(rng, max_k=4, max_alphabet=8, instances=200, fault: Optional[str] = None, **_):
    bad = 0
    cap = min(6, max_alphabet)
    for _ in range(instances):
        size = int(rng.integers(2, cap + 1))
        k = int(rng.integers(1, min(max_k, size) + 1))
        part = random_partition(rng, k)
        lam = random_lambdas(rng, size)
        prof = random_profile(rng, k, 1)
        sets = greedy_assignment(part, lam, prof).index_sets
        if fault == "greedy-assignment":
            # hand the top eigenvalue to the second-largest group
            swap = {1: 2, 2: 1}
            sets = tuple(tuple(swap.get(c, c) for c in cs) for cs in sets)
        greedy_value = math.fsum(float(lam[j]) / d for j, d in enumerate(
            _denoms(size, prof, sets)))
        if greedy_value != permutation_minimum(lam, part, prof):
            bad += 1
    return bad == 0, f"{bad} mismatches in {instances} partitions"


def _denoms(size, profile, sets):
    d = [profile.n0] * size
    for n, cs in zip(profile.helpers, sets):
        for c in cs:
            d[c - 1] += n
    return d


def check_bell(rng, max_k=8, **_):
    got = [sum(1 for _ in enumerate_partitions(k)) for k in range(1, max_k + 1)]
    want = [bell_number(k) for k in range(1, max_k + 1)]
    return got == want, "counts " + ",".join(map(str, got))


def check_m_partitions(rng, max_k=4, max_m=2, **_):
    rows = []
    ok = True
    for k in range(1, min(max_k, 3) + 1):
        for m in range(1, max_m + 1):
            got = sum(1 for _ in enumerate_m_partitions(k, m))
            want = m_partitions_oracle(k, m)
            ok &= got == want
            rows.append(f"({k},{m})={got}")
    return ok, " ".join(rows)


def check_two_node(rng, max_alphabet=8, instances=200, **_):
    agree = total = 0
    for _ in range(instances):
        size = int(rng.integers(2, max_alphabet + 1))
        lam = random_lambdas(rng, size)
        lam[1] = max(lam[1], 1e-3)
        lam = np.sort(lam)[::-1]
        prof = random_profile(rng, 2, 1)
        n0, (n1, n2) = prof.n0, prof.helpers
        hi, lo = max(n1, n2), min(n1, n2)
        threshold = (n0 + hi) * (n0 + hi + lo) / (n0 * (n0 + lo))
        if abs(lam[0] / lam[1] / threshold - 1) < 1e-9:
            continue
        total += 1
        plan = allocate_plan(lam, prof)
        shared = plan.index_sets[0] == plan.index_sets[1]
        agree += (two_node_strategy_test(lam[0], lam[1], n0, n1, n2) == "shared") == shared
    return agree == total, f"{agree}/{total} agree"


def check_cr_covariance(rng, max_alphabet=8, max_m=2, draws=100_000, **_):
    worst_cov = 0.0
    worst_mean = 0.0
    for _ in range(3):
        size = int(rng.integers(2, max_alphabet + 1))
        p = rng.dirichlet(np.ones(size))
        phi_star = np.sqrt(p)
        k = int(rng.integers(1, 4))
        m = int(rng.integers(1, min(max_m, size) + 1))
        prof = random_profile(rng, k, m, 20, 200)
        mats = []
        for i in range(k):
            q, _ = np.linalg.qr(rng.standard_normal((size, m)))
            mats.append(StatisticMatrix(i + 1, q))
        phi0 = phi_star + rng.standard_normal((draws, size)) / np.sqrt(prof.n0)
        values = [(phi_star + rng.standard_normal((draws, size)) / np.sqrt(n)) @ f.columns
                  for f, n in zip(mats, prof.helpers)]
        fused = fuse_batch(phi0, prof.n0, values, mats, prof.helpers)
        ainv = np.linalg.inv(information_matrix(size, prof.n0, mats, prof.helpers))
        se = fused.std(axis=0, ddof=1) / np.sqrt(draws)
        worst_mean = max(worst_mean, float(np.max(np.abs(fused.mean(axis=0) - phi_star) / se)))
        cov = np.cov(fused, rowvar=False)
        worst_cov = max(worst_cov, float(np.linalg.norm(cov - ainv) / np.linalg.norm(ainv)))
    ok = worst_mean < 4 and worst_cov <= 0.03
    return ok, f"mean {worst_mean:.2f} SE, covariance rel. error {worst_cov:.4f}"


def check_h_null(rng, max_alphabet=8, instances=200, **_):
    worst = 0.0
    psd = sym = True
    for t in range(min(instances, 50)):
        size = int(rng.integers(2, min(max_alphabet, 6) + 1))
        p = Distribution.from_probs(rng.dirichlet(np.ones(size) * 2) * (1 - 1e-3 * size) + 1e-3)
        if t % 2:
            model = CategoricalLogLoss(size)
        else:
            model = QuadraticEmbedding(rng.standard_normal((size, int(rng.integers(1, 4)))))
        H = epr_norm_matrix(model, p, optimal_parameter(model, p))
        sym &= bool(np.allclose(H.H, H.H.T, atol=1e-10, rtol=0))
        psd &= bool(np.linalg.eigvalsh(H.H).min() >= -1e-10)
        worst = max(worst, float(np.linalg.norm(H.H @ np.sqrt(p.mass))))
    return worst <= 1e-8 and psd and sym, f"max |H phi*| {worst:.1e}"


CHECKS: dict = {
    "allocate-vs-brute-force": check_allocate_vs_brute_force,
    "greedy-assignment": check_greedy,
    "bell-numbers": check_bell,
    "m-partition-counts": check_m_partitions,
    "two-node-test": check_two_node,
    "cr-covariance": check_cr_covariance,
    "h-null-direction": check_h_null,
}


def run_checks(max_k=4, max_m=2, max_alphabet=8, instances=200, seed=0,
               fault: Optional[str] = None, only=None) -> list:
    """Run every check; returns ``[(name, passed, detail), ...]``."""
    results = []
    for i, (name, fn) in enumerate(CHECKS.items()):
        if only is not None and name not in only:
            continue
        rng = np.random.default_rng([seed, i])
        ok, detail = fn(rng, max_k=max_k, max_m=max_m, max_alphabet=max_alphabet,
                        instances=instances, fault=fault)
        results.append((name, bool(ok), detail))
    return results
