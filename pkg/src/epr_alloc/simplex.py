"""Distributions on a finite alphabet and their information-vector coordinates.

An information vector of ``Q`` against a strictly positive reference ``P`` has
coordinates ``Q(x) / sqrt(P(x))``.  Around ``P`` the KL divergence is half the
squared Euclidean distance between information vectors, and the information
vector of an empirical distribution with ``n`` samples is approximately
Gaussian with covariance ``I / n``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

SUM_TOL = 1e-12

__all__ = [
    "Alphabet",
    "Distribution",
    "InfoVector",
    "RandomSeed",
    "info_vector",
    "kl_local",
    "kl_exact",
    "gaussian_log_density",
    "sample_empirical",
]


@dataclass(frozen=True)
class Alphabet:
    size: int
    labels: Optional[tuple] = None

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 2:
            raise ValueError(f"alphabet size must be an integer >= 2, got {self.size}")
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != self.size:
                raise ValueError("need exactly one label per symbol")
            if len(set(labels)) != len(labels):
                raise ValueError("alphabet labels must be distinct")
            object.__setattr__(self, "labels", labels)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Distribution:
    """A probability mass function on ``alphabet``."""

    alphabet: Alphabet
    mass: np.ndarray = field(repr=True)

    def __post_init__(self):
        mass = _frozen(self.mass)
        if mass.shape != (self.alphabet.size,):
            raise ValueError(f"mass has shape {mass.shape}, expected ({self.alphabet.size},)")
        if not np.all(np.isfinite(mass)) or np.any(mass < 0):
            raise ValueError("mass entries must be finite and non-negative")
        if abs(mass.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"mass sums to {mass.sum()!r}, not 1")
        object.__setattr__(self, "mass", mass)

    @classmethod
    def from_probs(cls, probs: Sequence[float], labels=None) -> "Distribution":
        probs = np.asarray(probs, dtype=float)
        return cls(Alphabet(len(probs), labels), probs)

    @property
    def size(self) -> int:
        return self.alphabet.size

    @property
    def is_strictly_positive(self) -> bool:
        return bool(np.all(self.mass > 0))

    def require_reference(self) -> None:
        if not self.is_strictly_positive:
            raise ValueError(
                "reference distribution must be strictly positive; "
                "drop zero-probability symbols from the alphabet first"
            )

    @property
    def sqrt_mass(self) -> np.ndarray:
        return np.sqrt(self.mass)

    def __eq__(self, other):
        if not isinstance(other, Distribution):
            return NotImplemented
        return self.alphabet == other.alphabet and np.array_equal(self.mass, other.mass)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class InfoVector:
    alphabet: Alphabet
    coords: np.ndarray

    def __post_init__(self):
        coords = _frozen(self.coords)
        if coords.shape != (self.alphabet.size,):
            raise ValueError(f"coords has shape {coords.shape}, expected ({self.alphabet.size},)")
        object.__setattr__(self, "coords", coords)

    @classmethod
    def of_reference(cls, reference: Distribution) -> "InfoVector":
        """The information vector of ``reference`` against itself, ``sqrt(P)``."""
        reference.require_reference()
        return cls(reference.alphabet, reference.sqrt_mass)

    def __sub__(self, other: "InfoVector") -> np.ndarray:
        _check_same(self.alphabet, other.alphabet)
        return self.coords - other.coords

    def __eq__(self, other):
        if not isinstance(other, InfoVector):
            return NotImplemented
        return self.alphabet == other.alphabet and np.array_equal(self.coords, other.coords)

    __hash__ = None


@dataclass(frozen=True)
class RandomSeed:
    """A (seed, stream) pair naming one independent random stream.

    Streams are derived through ``numpy.random.SeedSequence`` spawn keys, so
    the stream for a given pair does not depend on which other streams were
    drawn before it or on which thread draws it.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if int(v) != v or not 0 <= v < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v!r}")

    def child(self, *key: int) -> "RandomSeed":
        # fold (stream, *key) into a single 64-bit stream id
        ss = np.random.SeedSequence(self.stream, spawn_key=tuple(int(k) for k in key))
        return RandomSeed(self.seed, int(ss.generate_state(1, dtype=np.uint64)[0]))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=(self.stream,)))
        )


def _check_same(a: Alphabet, b: Alphabet) -> None:
    if a != b:
        raise ValueError(f"alphabet mismatch: {a} vs {b}")


def info_vector(reference: Distribution, q: Distribution) -> InfoVector:
    _check_same(reference.alphabet, q.alphabet)
    reference.require_reference()
    # sqrt(P) * (Q / P) equals Q / sqrt(P) and is exactly sqrt(P) when Q == P
    return InfoVector(q.alphabet, reference.sqrt_mass * (q.mass / reference.mass))


def kl_local(phi: InfoVector, phi_star: InfoVector) -> float:
    """Local KL approximation ``0.5 * ||phi - phi_star||^2`` in nats."""
    d = phi - phi_star
    return 0.5 * float(d @ d)


def kl_exact(q: Distribution, p: Distribution) -> float:
    """``D(Q || P)`` in nats, with ``0 log 0 = 0``; used to validate ``kl_local``."""
    _check_same(q.alphabet, p.alphabet)
    support = q.mass > 0
    if np.any(p.mass[support] == 0):
        return float("inf")
    qs = q.mass[support]
    return float(np.sum(qs * np.log(qs / p.mass[support])))


def gaussian_log_density(phi_hat: InfoVector, phi_star: InfoVector, n: int) -> float:
    """Log density of ``N(phi_star, I/n)`` evaluated at ``phi_hat``."""
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    d = phi_hat - phi_star
    dim = phi_hat.alphabet.size
    return -0.5 * dim * np.log(2 * np.pi / n) - 0.5 * n * float(d @ d)


def sample_empirical(p: Distribution, n: int, seed: RandomSeed) -> Distribution:
    """Empirical distribution of ``n`` i.i.d. draws from ``p``."""
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    counts = seed.generator().multinomial(n, p.mass)
    return Distribution(p.alphabet, counts / n)
