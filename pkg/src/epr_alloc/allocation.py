"""Choosing which eigenvectors of ``H`` each helper node transmits.

Helper ``i`` sends the projections of its empirical information vector onto
``m`` orthonormal eigenvectors of ``H``.  With eigenvalues ``lam`` sorted
descending the un-halved risk of an assignment is

    sum_j lam[j] / (n0 + sum_{i : j in C_i} n_i),

which is minimised by enumerating (m-fold) set partitions of the helpers and,
inside each partition, handing the largest eigenvalue to the group with the
largest sample total.

Helper ids and eigen indices in plans are 1-based, matching how plans are
written down; arrays stay 0-based.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Optional, Sequence

import numpy as np

from .risk import EprNormMatrix

EIG_NEG_TOL = 1e-10
BRUTE_FORCE_GUARD = 10**7

__all__ = [
    "InfeasibleError",
    "Eigensystem",
    "NodeProfile",
    "Partition",
    "AllocationPlan",
    "eigensystem",
    "plan_objective",
    "baseline_objective",
    "greedy_assignment",
    "enumerate_partitions",
    "enumerate_m_partitions",
    "bell_number",
    "candidate_indices",
    "allocate",
    "brute_force_allocate",
    "two_node_strategy_test",
]


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Eigensystem:
    lambdas: np.ndarray
    vectors: np.ndarray  # columns aligned with lambdas

    @property
    def size(self) -> int:
        return len(self.lambdas)

    def vector(self, index: int) -> np.ndarray:
        """Eigenvector for 1-based ``index``."""
        return self.vectors[:, index - 1]


def eigensystem(H, *, neg_tol: float = EIG_NEG_TOL) -> Eigensystem:
    """Descending eigendecomposition of a PSD matrix with a fixed sign convention.

    Each eigenvector's first coordinate with magnitude above 1e-12 is made
    positive.  Within a run of equal eigenvalues, vectors are ordered
    lexicographically.  Eigenvalues in ``[-neg_tol, 0)`` are clamped to 0.
    """
    mat = H.H if isinstance(H, EprNormMatrix) else np.asarray(H, dtype=float)
    mat = 0.5 * (mat + mat.T)
    try:
        w, v = np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("eigensolver did not converge") from exc
    if w.size and w.min() < -neg_tol * max(1.0, float(np.abs(w).max())):
        raise ValueError(f"matrix is not positive semi-definite (min eigenvalue {w.min():.3g})")
    w = np.where(w < 0, 0.0, w)
    for j in range(v.shape[1]):
        nz = np.flatnonzero(np.abs(v[:, j]) > 1e-12)
        if nz.size and v[nz[0], j] < 0:
            v[:, j] = -v[:, j]
    order = sorted(range(len(w)), key=lambda j: (-w[j], tuple(v[:, j])))
    # eigh returns ascending eigenvalues; near-equal values are only
    # reordered by the vector key when they are exactly equal
    w = w[order]
    v = v[:, order]
    w.setflags(write=False)
    v.setflags(write=False)
    return Eigensystem(w, v)


@dataclass(frozen=True)
class NodeProfile:
    n0: int
    helpers: tuple = ()
    m: int = 1

    def __post_init__(self):
        helpers = tuple(int(n) for n in self.helpers)
        object.__setattr__(self, "helpers", helpers)
        if self.n0 < 1 or any(n < 1 for n in helpers):
            raise ValueError("sample counts must be positive")
        if self.m < 1:
            raise ValueError("statistic dimension m must be >= 1")

    @property
    def k(self) -> int:
        return len(self.helpers)

    def group_total(self, group: Sequence[int]) -> int:
        return sum(self.helpers[i - 1] for i in group)

    def scaled(self, s: int) -> "NodeProfile":
        return NodeProfile(self.n0 * s, tuple(n * s for n in self.helpers), self.m)


@dataclass(frozen=True)
class Partition:
    """A multiset of non-empty helper groups (1-based helper ids)."""

    groups: tuple

    @classmethod
    def of(cls, groups, weights: Optional[Sequence[int]] = None) -> "Partition":
        """Canonical form: groups ascending inside; groups ordered by descending
        weight total, then lexicographically.  Unit weights when not given."""
        gs = [tuple(sorted(int(a) for a in g)) for g in groups]
        if any(len(g) == 0 for g in gs):
            raise ValueError("partition groups must be non-empty")

        def total(g):
            return len(g) if weights is None else sum(weights[a - 1] for a in g)

        return cls(tuple(sorted(gs, key=lambda g: (-total(g), g))))

    def multiplicity(self, k: int) -> list:
        counts = [0] * k
        for g in self.groups:
            for a in g:
                counts[a - 1] += 1
        return counts

    def __len__(self):
        return len(self.groups)


@dataclass(frozen=True, eq=False)
class AllocationPlan:
    """Eigen-index sets chosen for each helper (``index_sets[i-1]`` is helper i)."""

    index_sets: tuple
    objective: float
    partition: Optional[Partition] = None
    matrices: Optional[tuple] = field(default=None, repr=False)

    @property
    def epr(self) -> float:
        return self.objective / 2

    @property
    def k(self) -> int:
        return len(self.index_sets)

    def statistic_matrices(self, eigs: Eigensystem) -> tuple:
        """``F_i`` as ``|X| x m`` arrays whose columns are the chosen eigenvectors."""
        return tuple(eigs.vectors[:, [c - 1 for c in cs]] for cs in self.index_sets)

    def with_matrices(self, eigs: Eigensystem) -> "AllocationPlan":
        return AllocationPlan(self.index_sets, self.objective, self.partition,
                              self.statistic_matrices(eigs))

    def to_dict(self) -> dict:
        return {
            "index_sets": [list(c) for c in self.index_sets],
            "objective": self.objective,
            "epr": self.epr,
            "partition": None if self.partition is None else [list(g) for g in self.partition.groups],
        }


def _lambdas(lambdas) -> np.ndarray:
    if isinstance(lambdas, Eigensystem):
        return np.asarray(lambdas.lambdas, dtype=float)
    return np.asarray(lambdas, dtype=float)


def _denominators(size: int, profile: NodeProfile, index_sets) -> list:
    denom = [profile.n0] * size
    for n, cs in zip(profile.helpers, index_sets):
        for c in cs:
            if not 1 <= c <= size:
                raise IndexError(f"eigen index {c} outside 1..{size}")
            denom[c - 1] += n
    return denom


def plan_objective(lambdas, profile: NodeProfile, plan) -> float:
    """Un-halved risk ``sum_j lam_j / (n0 + sum_{i: j in C_i} n_i)``.

    ``plan`` is an AllocationPlan or a sequence of index sets.  Terms are
    summed with ``math.fsum`` so that assignments equal in exact arithmetic
    compare equal.
    """
    lam = _lambdas(lambdas)
    sets = plan.index_sets if isinstance(plan, AllocationPlan) else plan
    if len(sets) != profile.k:
        raise ValueError(f"plan has {len(sets)} helpers, profile has {profile.k}")
    denom = _denominators(len(lam), profile, sets)
    return math.fsum(float(l) / d for l, d in zip(lam, denom))


def baseline_objective(lambdas, n0: int) -> float:
    return math.fsum(float(l) / n0 for l in _lambdas(lambdas))


def greedy_assignment(partition: Partition, lambdas, profile: NodeProfile) -> AllocationPlan:
    """Best eigen-index assignment for a fixed partition.

    The group with the r-th largest sample total receives eigen index r.
    """
    lam = _lambdas(lambdas)
    if len(partition) > len(lam):
        raise InfeasibleError(f"{len(partition)} groups but only {len(lam)} eigenvectors")
    groups = sorted(partition.groups, key=lambda g: (-profile.group_total(g), g))
    sets = [[] for _ in range(profile.k)]
    for r, g in enumerate(groups, start=1):
        for a in g:
            sets[a - 1].append(r)
    sets = tuple(tuple(s) for s in sets)
    return AllocationPlan(sets, plan_objective(lam, profile, sets),
                          Partition(tuple(groups)))


def _rgs(k: int, max_blocks: Optional[int] = None) -> Iterator[list]:
    """Restricted growth strings of length k in lexicographic order."""
    a = [0] * k
    cap = k if max_blocks is None else max_blocks

    def rec(i, top):
        if i == k:
            yield a
            return
        for b in range(min(top + 2, cap)):
            a[i] = b
            yield from rec(i + 1, max(top, b))

    if k >= 1:
        a[0] = 0
        yield from rec(1, 0)


def enumerate_partitions(k: int, weights: Optional[Sequence[int]] = None,
                         max_groups: Optional[int] = None) -> Iterator[Partition]:
    """Every set partition of ``{1..k}`` once, in restricted-growth-string order.

    ``max_groups`` drops partitions with more groups without generating them.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    for s in _rgs(k, max_groups):
        blocks = [[] for _ in range(max(s) + 1)]
        for i, b in enumerate(s, start=1):
            blocks[b].append(i)
        yield Partition.of(blocks, weights)


def enumerate_m_partitions(k: int, m: int, weights: Optional[Sequence[int]] = None,
                           max_groups: Optional[int] = None) -> Iterator[Partition]:
    """Every multiset of non-empty subsets of ``{1..k}`` covering each index exactly m times.

    For ``m == 1`` this is exactly ``enumerate_partitions``.  Otherwise
    subsets are encoded as bitmasks and built in a canonical order that
    visits each multiset once without deduplication.
    """
    if k < 1 or m < 1:
        raise ValueError("need k >= 1 and m >= 1")
    if m == 1:
        yield from enumerate_partitions(k, weights, max_groups)
        return
    for masks in _m_partition_masks(k, m, max_groups or m * k):
        groups = [[i + 1 for i in range(k) if mask >> i & 1] for mask in masks]
        yield Partition.of(groups, weights)


@lru_cache(maxsize=None)
def _m_partition_masks(k: int, m: int, max_groups: int) -> tuple:
    # Groups are listed by (lowest member, mask).  In that order the next group
    # must start at the lowest index still short of m, so every multiset is
    # produced exactly once and dead branches are cut immediately.
    out = []
    counts = [0] * k
    chosen = []

    def rec(prev):
        low = next((i for i in range(k) if counts[i] < m), None)
        if low is None:
            out.append(tuple(chosen))
            return
        # each group holds an index at most once, and at most k indices
        short = [m - c for c in counts]
        if len(chosen) + max(max(short), -(-sum(short) // k)) > max_groups:
            return
        bit = 1 << low
        floor = prev if prev & -prev == bit else 0
        free = sum(1 << i for i in range(low + 1, k) if counts[i] < m)
        high = 0
        while True:
            # submasks of ``free`` in increasing order
            mask = bit | high
            if mask >= floor:
                bits = [i for i in range(low, k) if mask >> i & 1]
                for i in bits:
                    counts[i] += 1
                chosen.append(mask)
                rec(mask)
                chosen.pop()
                for i in bits:
                    counts[i] -= 1
            if high == free:
                break
            high = (high - free) & free

    rec(0)
    return tuple(out)


@lru_cache(maxsize=None)
def bell_number(k: int) -> int:
    """Bell number via ``B(n+1) = sum_j C(n, j) B(j)``."""
    if k == 0:
        return 1
    return sum(math.comb(k - 1, j) * bell_number(j) for j in range(k))


def candidate_indices(size: int, profile: NodeProfile) -> range:
    return range(1, min(profile.m * profile.k + 1, size) + 1)


def allocate(eigs: Eigensystem, profile: NodeProfile) -> AllocationPlan:
    """Exact minimiser of ``plan_objective`` by partition search.

    Scans (m-fold) partitions of the helpers in enumeration order, assigns
    eigen indices greedily inside each, and keeps the first strictly best
    plan.  Partitions with more groups than eigenvectors are never generated.
    """
    lam = _lambdas(eigs)
    if profile.k == 0:
        return AllocationPlan((), baseline_objective(lam, profile.n0)).with_matrices(eigs)
    if profile.m > len(lam):
        raise InfeasibleError(f"m={profile.m} distinct eigenvectors requested from {len(lam)}")
    best = None
    for part in enumerate_m_partitions(profile.k, profile.m, profile.helpers, len(lam)):
        plan = greedy_assignment(part, lam, profile)
        if best is None or plan.objective < best.objective:
            best = plan
    if best is None:
        raise InfeasibleError("no partition fits the alphabet")
    return best.with_matrices(eigs)


def brute_force_allocate(eigs, profile: NodeProfile, guard: int = BRUTE_FORCE_GUARD) -> AllocationPlan:
    """Exhaustive minimum over all per-helper choices of m distinct candidate indices.

    Evaluated in one vectorised pass; ties resolve to the first assignment in
    ``itertools.product`` order.
    """
    lam = _lambdas(eigs)
    size = len(lam)
    if profile.k == 0:
        plan = AllocationPlan((), baseline_objective(lam, profile.n0))
        return plan.with_matrices(eigs) if isinstance(eigs, Eigensystem) else plan
    cand = list(candidate_indices(size, profile))
    if profile.m > len(cand):
        raise InfeasibleError(f"m={profile.m} distinct eigenvectors requested from {len(cand)}")
    combos = list(itertools.combinations(cand, profile.m))
    total = len(combos) ** profile.k
    if total > guard:
        raise InfeasibleError(f"{total} assignments exceeds brute-force guard {guard}")

    ind = np.zeros((len(combos), size))
    for r, cs in enumerate(combos):
        ind[r, [c - 1 for c in cs]] = 1.0
    denom = np.full((1,) * profile.k + (size,), float(profile.n0))
    for i, n in enumerate(profile.helpers):
        shape = [1] * profile.k + [size]
        shape[i] = len(combos)
        denom = denom + n * ind.reshape(shape)
    values = (lam / denom).sum(axis=-1)
    flat = int(np.argmin(values))
    choice = np.unravel_index(flat, values.shape)
    sets = tuple(combos[c] for c in choice)
    plan = AllocationPlan(sets, plan_objective(lam, profile, sets))
    return plan.with_matrices(eigs) if isinstance(eigs, Eigensystem) else plan


def two_node_strategy_test(lambda1: float, lambda2: float, n0: int, n1: int, n2: int) -> str:
    """Closed-form choice for two helpers with scalar statistics.

    Returns ``"shared"`` when both helpers should send the top eigenvector
    and ``"separate"`` when they should send the top two.  Exact ties go to
    ``"separate"``.
    """
    if lambda1 < lambda2 or lambda2 < 0:
        raise ValueError("need lambda1 >= lambda2 >= 0")
    if lambda2 == 0:
        return "shared"
    n1, n2 = max(n1, n2), min(n1, n2)
    threshold = (n0 + n1) * (n0 + n1 + n2) / (n0 * (n0 + n2))
    return "shared" if lambda1 / lambda2 > threshold else "separate"
