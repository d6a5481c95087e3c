"""Loss models on a finite alphabet and the EPR norm matrix they induce.

For a loss ``l(x; theta)`` and a reference distribution ``P`` the excess
population risk of a plug-in estimate trained on a nearby distribution is,
to second order, ``0.5 * d^T H d`` where ``d`` is the information-vector
perturbation and

    H[x1, x2] = sqrt(P[x1] P[x2]) grad l(x1)^T pinv(Theta) grad l(x2),
    Theta     = sum_x P[x] hess l(x),

both evaluated at the population optimum ``theta*``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp, softmax

from .simplex import Distribution, InfoVector

log = logging.getLogger(__name__)

PINV_TOL = 1e-10

__all__ = [
    "ConvergenceError",
    "LossModel",
    "QuadraticEmbedding",
    "CategoricalLogLoss",
    "UserLoss",
    "OptimalParameter",
    "EprNormMatrix",
    "check_derivatives",
    "pinv_sym",
    "population_risk",
    "optimal_parameter",
    "epr_norm_matrix",
    "theta_perturbation",
    "epr_quadratic",
]


class ConvergenceError(RuntimeError):
    pass


def pinv_sym(a: np.ndarray, rtol: float = PINV_TOL) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric matrix.

    Eigenvalues at or below ``rtol * max|eigenvalue|`` are treated as zero.
    """
    a = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(a)
    scale = np.max(np.abs(w)) if w.size else 0.0
    if scale == 0.0:
        return np.zeros_like(a)
    keep = np.abs(w) > rtol * scale
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return (v * inv) @ v.T


class LossModel:
    """Base class: a loss ``l(x; theta)`` with ``x`` in ``range(size)``.

    Subclasses implement the per-symbol evaluators; the vectorised
    ``losses``/``grads``/``hessians`` loop over the alphabet unless a
    subclass provides something faster.
    """

    kind = "user-defined"

    def __init__(self, size: int, dim: int):
        if size < 2 or dim < 1:
            raise ValueError("need alphabet size >= 2 and parameter dimension >= 1")
        self.size = int(size)
        self.dim = int(dim)

    def loss(self, x: int, theta: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, x: int, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x: int, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def losses(self, theta) -> np.ndarray:
        return np.array([self.loss(x, theta) for x in range(self.size)])

    def grads(self, theta) -> np.ndarray:
        return np.array([self.grad(x, theta) for x in range(self.size)]).reshape(self.size, self.dim)

    def hessians(self, theta) -> np.ndarray:
        return np.array([self.hessian(x, theta) for x in range(self.size)]).reshape(
            self.size, self.dim, self.dim
        )

    def closed_form_optimum(self, p: np.ndarray) -> Optional[np.ndarray]:
        """Exact minimiser of ``sum_x p[x] l(x; theta)``, or None if unknown."""
        return None

    def initial_theta(self) -> np.ndarray:
        return np.zeros(self.dim)

    def spec(self) -> dict:
        """JSON-serialisable description, used for config hashing."""
        return {"kind": self.kind}


class QuadraticEmbedding(LossModel):
    """``l(x; theta) = 0.5 * ||theta - e(x)||^2`` with fixed embeddings ``e``."""

    kind = "quadratic-embedding"

    def __init__(self, embeddings):
        emb = np.array(embeddings, dtype=float)
        if emb.ndim == 1:
            emb = emb[:, None]
        super().__init__(emb.shape[0], emb.shape[1])
        emb.setflags(write=False)
        self.embeddings = emb

    def loss(self, x, theta):
        d = np.asarray(theta, dtype=float) - self.embeddings[x]
        return 0.5 * float(d @ d)

    def grad(self, x, theta):
        return np.asarray(theta, dtype=float) - self.embeddings[x]

    def hessian(self, x, theta):
        return np.eye(self.dim)

    def losses(self, theta):
        d = np.asarray(theta, dtype=float)[None, :] - self.embeddings
        return 0.5 * np.einsum("xd,xd->x", d, d)

    def grads(self, theta):
        return np.asarray(theta, dtype=float)[None, :] - self.embeddings

    def hessians(self, theta):
        return np.broadcast_to(np.eye(self.dim), (self.size, self.dim, self.dim)).copy()

    def closed_form_optimum(self, p):
        return np.asarray(p, dtype=float) @ self.embeddings

    def spec(self):
        return {"kind": self.kind, "embeddings": self.embeddings.tolist()}


class CategoricalLogLoss(LossModel):
    """Cross-entropy of a softmax over ``size`` logits: ``-log softmax(theta)[x]``.

    The Hessian is singular along the all-ones logit direction, so every
    downstream computation has to go through a pseudo-inverse.
    """

    kind = "categorical-logloss"

    def __init__(self, size: int):
        super().__init__(size, size)

    def loss(self, x, theta):
        theta = np.asarray(theta, dtype=float)
        return float(logsumexp(theta) - theta[x])

    def grad(self, x, theta):
        g = softmax(np.asarray(theta, dtype=float))
        g[x] -= 1.0
        return g

    def hessian(self, x, theta):
        s = softmax(np.asarray(theta, dtype=float))
        return np.diag(s) - np.outer(s, s)

    def losses(self, theta):
        theta = np.asarray(theta, dtype=float)
        return logsumexp(theta) - theta

    def grads(self, theta):
        return softmax(np.asarray(theta, dtype=float))[None, :] - np.eye(self.size)

    def hessians(self, theta):
        s = softmax(np.asarray(theta, dtype=float))
        h = np.diag(s) - np.outer(s, s)
        return np.broadcast_to(h, (self.size, self.size, self.size)).copy()

    def closed_form_optimum(self, p):
        p = np.asarray(p, dtype=float)
        if np.any(p <= 0):
            # minimiser is at infinity
            return None
        t = np.log(p)
        return t - t.mean()

    def spec(self):
        return {"kind": self.kind, "size": self.size}


class UserLoss(LossModel):
    """A loss assembled from user callables ``f(x, theta)``."""

    def __init__(self, size, dim, loss: Callable, grad: Callable, hessian: Callable,
                 name: str = "user", theta0=None):
        super().__init__(size, dim)
        self._loss, self._grad, self._hess = loss, grad, hessian
        self.name = name
        self._theta0 = None if theta0 is None else np.asarray(theta0, dtype=float)

    def loss(self, x, theta):
        return float(self._loss(x, np.asarray(theta, dtype=float)))

    def grad(self, x, theta):
        return np.asarray(self._grad(x, np.asarray(theta, dtype=float)), dtype=float).reshape(self.dim)

    def hessian(self, x, theta):
        return np.asarray(self._hess(x, np.asarray(theta, dtype=float)), dtype=float).reshape(
            self.dim, self.dim
        )

    def initial_theta(self):
        return np.zeros(self.dim) if self._theta0 is None else self._theta0.copy()

    def spec(self):
        return {"kind": self.kind, "name": self.name, "size": self.size, "dim": self.dim}


def check_derivatives(model: LossModel, rng: np.random.Generator, points: int = 20,
                      step: float = 1e-5, scale: float = 1.0) -> float:
    """Largest relative error of grad/hessian against central differences.

    Evaluates at ``points`` random ``(x, theta)`` pairs with
    ``theta ~ N(0, scale^2)``.
    """
    worst = 0.0
    eye = np.eye(model.dim)
    for _ in range(points):
        x = int(rng.integers(model.size))
        theta = scale * rng.standard_normal(model.dim)
        fd_g = np.array([
            (model.loss(x, theta + step * e) - model.loss(x, theta - step * e)) / (2 * step)
            for e in eye
        ])
        fd_h = np.array([
            (model.grad(x, theta + step * e) - model.grad(x, theta - step * e)) / (2 * step)
            for e in eye
        ]).T
        g = model.grad(x, theta)
        h = model.hessian(x, theta)
        worst = max(
            worst,
            np.linalg.norm(g - fd_g) / max(np.linalg.norm(g), 1.0),
            np.linalg.norm(h - fd_h) / max(np.linalg.norm(h), 1.0),
        )
    return float(worst)


@dataclass(frozen=True)
class OptimalParameter:
    theta: np.ndarray
    risk: float
    gradient_norm: float


def population_risk(model: LossModel, p: Distribution, theta) -> float:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.dim,):
        raise ValueError(f"theta has shape {theta.shape}, model expects ({model.dim},)")
    if p.size != model.size:
        raise ValueError("distribution and model disagree on alphabet size")
    return float(p.mass @ model.losses(theta))


def _risk_grad(model, mass, theta):
    return mass @ model.grads(theta)


def optimal_parameter(model: LossModel, p: Distribution, tol: float = 1e-10,
                      max_iters: int = 200) -> OptimalParameter:
    """Minimise the population risk under ``p``.

    Uses the model's closed form when available, otherwise damped Newton with
    Armijo backtracking.  Newton steps use the pseudo-inverse of the risk
    Hessian; when that does not give a descent direction the step falls back
    to steepest descent.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if p.size != model.size:
        raise ValueError("distribution and model disagree on alphabet size")
    mass = p.mass

    theta = model.closed_form_optimum(mass)
    if theta is not None:
        theta = np.asarray(theta, dtype=float)
        gnorm = float(np.linalg.norm(_risk_grad(model, mass, theta)))
        if gnorm <= tol:
            return OptimalParameter(theta, population_risk(model, p, theta), gnorm)
        log.debug("closed form gradient norm %.3g > tol, refining with Newton", gnorm)
    else:
        theta = model.initial_theta()

    risk = population_risk(model, p, theta)
    for it in range(max_iters):
        g = _risk_grad(model, mass, theta)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            return OptimalParameter(theta, risk, gnorm)
        h = np.einsum("x,xij->ij", mass, model.hessians(theta))
        step = -pinv_sym(h, 1e-12) @ g
        slope = float(g @ step)
        if not np.all(np.isfinite(step)) or slope >= 0:
            step, slope = -g, -gnorm**2
        t = 1.0
        while True:
            cand = theta + t * step
            cand_risk = population_risk(model, p, cand)
            if cand_risk <= risk + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                # no decrease representable in floating point
                cand_risk = risk
                cand = theta + t * step
                break
        theta, risk = cand, cand_risk
    g = _risk_grad(model, mass, theta)
    gnorm = float(np.linalg.norm(g))
    if gnorm <= tol:
        return OptimalParameter(theta, risk, gnorm)
    raise ConvergenceError(f"Newton did not reach gradient norm {tol:g} in {max_iters} iterations "
                           f"(last {gnorm:.3g})")


@dataclass(frozen=True, eq=False)
class EprNormMatrix:
    """The EPR norm matrix ``H`` together with what was needed to build it."""

    H: np.ndarray
    theta_matrix: np.ndarray
    theta_pinv: np.ndarray
    grads: np.ndarray
    reference: Distribution
    theta_star: np.ndarray
    pinv_tolerance: float = PINV_TOL

    @property
    def phi_star(self) -> InfoVector:
        return InfoVector.of_reference(self.reference)

    @property
    def trace(self) -> float:
        return float(np.trace(self.H))


def epr_norm_matrix(model: LossModel, p: Distribution, opt: OptimalParameter,
                    pinv_tolerance: float = PINV_TOL) -> EprNormMatrix:
    p.require_reference()
    theta = np.asarray(opt.theta, dtype=float)
    theta_mat = np.einsum("x,xij->ij", p.mass, model.hessians(theta))
    theta_mat = 0.5 * (theta_mat + theta_mat.T)
    if not np.any(theta_mat):
        raise ValueError("Hessian aggregate is identically zero; the model is degenerate")
    theta_pinv = pinv_sym(theta_mat, pinv_tolerance)
    grads = model.grads(theta)
    scaled = p.sqrt_mass[:, None] * grads
    h = scaled @ theta_pinv @ scaled.T
    h = 0.5 * (h + h.T)
    return EprNormMatrix(h, theta_mat, theta_pinv, grads, p, theta, pinv_tolerance)


def theta_perturbation(model: LossModel, p: Distribution, opt: OptimalParameter,
                       phi_hat: InfoVector, epr: Optional[EprNormMatrix] = None) -> np.ndarray:
    """First-order estimate of the ERM solution at ``phi_hat``.

    ``theta* - pinv(Theta) @ sum_x (phi_hat - phi*)[x] sqrt(P[x]) grad l(x; theta*)``.
    """
    if epr is None:
        epr = epr_norm_matrix(model, p, opt)
    d = phi_hat - epr.phi_star
    return np.asarray(opt.theta, dtype=float) - epr.theta_pinv @ ((d * p.sqrt_mass) @ epr.grads)


def epr_quadratic(H: EprNormMatrix, phi: InfoVector, phi_star: InfoVector) -> float:
    d = phi - phi_star
    if d.shape != (H.H.shape[0],):
        raise ValueError("information vector does not match H")
    return 0.5 * float(d @ H.H @ d)
