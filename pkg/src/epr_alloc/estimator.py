"""Maximum-likelihood fusion of the target's information vector with helper statistics.

Under the Gaussian surrogate, ``phi_hat_i ~ N(phi*, I/n_i)`` and helper ``i``
reveals ``F_i^T phi_hat_i`` for an orthonormal ``F_i``.  The MLE is

    phi_tilde = A^{-1} (n0 phi_hat_0 + sum_i n_i F_i F_i^T phi_hat_i),
    A = n0 I + sum_i n_i F_i F_i^T,

which is unbiased with covariance ``A^{-1}``, so its ``H``-weighted mean
square error is ``tr(H A^{-1})``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .allocation import AllocationPlan, Eigensystem, NodeProfile
from .risk import EprNormMatrix
from .simplex import Distribution, InfoVector

log = logging.getLogger(__name__)

ORTHO_TOL = 1e-10

__all__ = [
    "StatisticMatrix",
    "TransmittedStatistic",
    "FusedEstimate",
    "information_matrix",
    "transmit",
    "ml_fuse",
    "fuse_batch",
    "predicted_mse",
    "reconstruct_distribution",
]


@dataclass(frozen=True, eq=False)
class StatisticMatrix:
    """Orthonormal columns ``u_i^(1..m)`` used by helper ``helper_id``."""

    helper_id: int
    columns: np.ndarray

    def __post_init__(self):
        cols = np.array(self.columns, dtype=float)
        if cols.ndim == 1:
            cols = cols[:, None]
        gram = cols.T @ cols
        if not np.allclose(gram, np.eye(cols.shape[1]), atol=ORTHO_TOL, rtol=0):
            raise ValueError(f"statistic matrix for helper {self.helper_id} is not orthonormal")
        cols.setflags(write=False)
        object.__setattr__(self, "columns", cols)

    @property
    def m(self) -> int:
        return self.columns.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.columns @ self.columns.T


@dataclass(frozen=True, eq=False)
class TransmittedStatistic:
    helper_id: int
    values: np.ndarray
    sample_count: int


@dataclass(frozen=True, eq=False)
class FusedEstimate:
    phi_tilde: InfoVector
    information_matrix: np.ndarray
    predicted_mse: Optional[float] = None


def transmit(matrix: StatisticMatrix, phi_hat: InfoVector, n: int) -> TransmittedStatistic:
    """What helper ``matrix.helper_id`` sends: ``F^T phi_hat``."""
    return TransmittedStatistic(matrix.helper_id, matrix.columns.T @ phi_hat.coords, int(n))


def information_matrix(size: int, n0: int, matrices: Sequence, counts: Sequence[int]) -> np.ndarray:
    a = n0 * np.eye(size)
    for f, n in zip(matrices, counts):
        cols = f.columns if isinstance(f, StatisticMatrix) else np.asarray(f, dtype=float)
        a += n * cols @ cols.T
    return a


def _pair(statistics, matrices):
    by_id = {f.helper_id: f for f in matrices}
    if len(by_id) != len(matrices) or len(statistics) != len(matrices):
        raise ValueError("statistics and statistic matrices must pair one-to-one")
    pairs = []
    for s in statistics:
        f = by_id.get(s.helper_id)
        if f is None:
            raise ValueError(f"no statistic matrix for helper {s.helper_id}")
        if len(s.values) != f.m:
            raise ValueError(f"helper {s.helper_id} sent {len(s.values)} values, expected {f.m}")
        pairs.append((s, f))
    return pairs


def ml_fuse(phi_hat_0: InfoVector, n0: int, statistics: Sequence[TransmittedStatistic],
            matrices: Sequence[StatisticMatrix], H: Optional[EprNormMatrix] = None,
            as_printed: bool = False) -> FusedEstimate:
    """Fuse the target's own vector with the helpers' statistics.

    ``as_printed=True`` drops the ``n_i`` weight on each helper's data term,
    reproducing the uncorrected form for comparison; that variant is biased
    whenever some ``n_i != 1``.
    """
    pairs = _pair(statistics, matrices)
    size = phi_hat_0.alphabet.size
    if not pairs:
        a = n0 * np.eye(size)
        mse = None if H is None else float(np.trace(H.H)) / n0
        return FusedEstimate(phi_hat_0, a, mse)
    a = information_matrix(size, n0, [f for _, f in pairs], [s.sample_count for s, _ in pairs])
    rhs = n0 * phi_hat_0.coords
    for s, f in pairs:
        w = 1.0 if as_printed else s.sample_count
        rhs = rhs + w * (f.columns @ np.asarray(s.values, dtype=float))
    phi = linalg.solve(a, rhs, assume_a="pos")
    mse = None if H is None else _trace_h_ainv(H.H, a)
    return FusedEstimate(InfoVector(phi_hat_0.alphabet, phi), a, mse)


def fuse_batch(phi_hat_0: np.ndarray, n0: int, values: Sequence[np.ndarray],
               matrices: Sequence[StatisticMatrix], counts: Sequence[int]) -> np.ndarray:
    """Vectorised ``ml_fuse`` over a leading batch axis.

    ``phi_hat_0`` is ``(N, |X|)`` and ``values[i]`` is ``(N, m_i)``.
    """
    phi_hat_0 = np.atleast_2d(phi_hat_0)
    if not matrices:
        return phi_hat_0.copy()
    a = information_matrix(phi_hat_0.shape[1], n0, matrices, counts)
    rhs = n0 * phi_hat_0
    for v, f, n in zip(values, matrices, counts):
        rhs = rhs + n * np.atleast_2d(v) @ f.columns.T
    cho = linalg.cho_factor(a)
    return linalg.cho_solve(cho, rhs.T).T


def _trace_h_ainv(h, a):
    return float(np.trace(linalg.solve(a, h, assume_a="pos")))


def predicted_mse(H, plan, profile: NodeProfile, eigs: Optional[Eigensystem] = None) -> float:
    """``tr(H A^{-1})``: the un-halved risk of the fused estimate.

    ``plan`` is an AllocationPlan (needs ``eigs`` unless it already carries
    matrices) or a sequence of ``|X| x m`` column matrices, one per helper.
    """
    h = H.H if isinstance(H, EprNormMatrix) else np.asarray(H, dtype=float)
    if isinstance(plan, AllocationPlan):
        mats = plan.matrices if plan.matrices is not None else plan.statistic_matrices(eigs)
    else:
        mats = plan
    if len(mats) != profile.k:
        raise ValueError(f"{len(mats)} statistic matrices for {profile.k} helpers")
    a = information_matrix(h.shape[0], profile.n0, mats, profile.helpers)
    return _trace_h_ainv(h, a)


def reconstruct_distribution(phi_tilde: InfoVector, reference: Distribution):
    """Map an information vector back to a distribution.

    Returns ``(distribution, defect)``.  Negative masses are clamped to 0 and
    the result renormalised; ``defect`` is the clamped negative mass plus
    ``|1 - sum|`` before clamping.
    """
    reference.require_reference()
    if phi_tilde.alphabet != reference.alphabet:
        raise ValueError("alphabet mismatch")
    # P * (phi / sqrt P) rather than phi * sqrt P: exact when phi == phi*
    raw = reference.mass * (phi_tilde.coords / reference.sqrt_mass)
    negative = float(-raw[raw < 0].sum())
    defect = negative + abs(1.0 - float(raw.sum()))
    q = np.clip(raw, 0.0, None)
    total = q.sum()
    if total <= 0:
        raise ValueError("reconstructed distribution has no positive mass")
    if negative > 0:
        log.debug("clamped %.3g negative mass during reconstruction", negative)
    if negative > 0 or abs(total - 1.0) > 1e-13:
        q = q / total
    return Distribution(reference.alphabet, q), defect
