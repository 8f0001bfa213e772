"""Smooth, strongly convex losses and their stochastic access paths.

Three kinds are supported:

* :class:`SquaredLoss` -- ``f(b) = 0.5 * ||b - y||^2``; tilted minimizer and
  convex conjugate in closed form.
* :class:`FiniteSumLoss` -- average of quadratic pieces
  ``f_i(b) = 0.5 * ||b - a_i||^2 + c_i`` with component gradients.
* :class:`CustomLoss` -- user supplied value/gradient with declared moduli.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import ConfigError, NoClosedForm


def _check_dim(loss, beta):
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (loss.dim,):
        raise ConfigError(f"expected a vector of length {loss.dim}, got shape {beta.shape}")
    return beta


@dataclass(frozen=True)
class SquaredLoss:
    y: np.ndarray
    kind = "squared"
    mu = 1.0
    ell = 1.0

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        if y.ndim != 1:
            raise ConfigError("data vector must be one dimensional")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def dim(self):
        return self.y.size

    def value(self, beta):
        r = _check_dim(self, beta) - self.y
        return 0.5 * float(r @ r)

    def grad(self, beta):
        return _check_dim(self, beta) - self.y


@dataclass(frozen=True)
class FiniteSumLoss:
    """``f(b) = mean_i 0.5 * ||b - a_i||^2 + c_i``.

    ``anchors`` has shape ``(n_sam, d)``; ``offsets`` has length ``n_sam``.
    """

    anchors: np.ndarray
    offsets: np.ndarray | None = None
    kind = "finite_sum"
    mu = 1.0
    ell = 1.0

    def __post_init__(self):
        a = np.array(self.anchors, dtype=float)
        if a.ndim != 2 or a.shape[0] < 1:
            raise ConfigError("anchors must be a non-empty (n_sam, d) array")
        c = np.zeros(a.shape[0]) if self.offsets is None else np.array(self.offsets, dtype=float)
        if c.shape != (a.shape[0],):
            raise ConfigError("one offset per component required")
        a.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "anchors", a)
        object.__setattr__(self, "offsets", c)

    @classmethod
    def from_squared(cls, y, n_sam, spread, seed=0):
        """Split ``0.5 * ||b - y||^2`` into ``n_sam`` noisy pieces with the same sum.

        Anchors are ``y`` plus centred Gaussian perturbations of scale
        ``spread``; offsets cancel the added spread so the averaged loss is
        identical to the squared loss.
        """
        y = np.asarray(y, dtype=float)
        rng = np.random.default_rng(seed)
        noise = spread * rng.standard_normal((n_sam, y.size))
        noise -= noise.mean(axis=0)
        var = float(np.mean(np.sum(noise**2, axis=1)))
        return cls(y + noise, np.full(n_sam, -0.5 * var))

    @property
    def n_sam(self):
        return self.anchors.shape[0]

    @property
    def dim(self):
        return self.anchors.shape[1]

    def value(self, beta):
        r = _check_dim(self, beta) - self.anchors
        return float(np.mean(0.5 * np.sum(r * r, axis=1) + self.offsets))

    def grad(self, beta):
        return _check_dim(self, beta) - self.anchors.mean(axis=0)

    def component_grad(self, i, beta):
        return beta - self.anchors[i]

    def noise_variance(self):
        """``E||grad f_i(b) - grad f(b)||^2`` under uniform sampling (constant in ``b``)."""
        dev = self.anchors - self.anchors.mean(axis=0)
        return float(np.mean(np.sum(dev * dev, axis=1)))


@dataclass(frozen=True)
class CustomLoss:
    """A loss given by callables. ``mu`` and ``ell`` are trusted as declared.

    ``sample_grad(beta, rng)`` is optional and enables the stochastic path.
    """

    fun: Callable
    grad_fun: Callable
    dim: int
    mu: float
    ell: float
    sample_grad: Callable | None = field(default=None)
    kind = "custom"

    def __post_init__(self):
        if not (self.mu > 0 and self.ell >= self.mu):
            raise ConfigError(f"need ell >= mu > 0, got mu={self.mu}, ell={self.ell}")

    def value(self, beta):
        return float(self.fun(_check_dim(self, beta)))

    def grad(self, beta):
        return np.asarray(self.grad_fun(_check_dim(self, beta)), dtype=float)


def quadratic_loss(h, center=None):
    """``0.5 * (b - c)^T diag(h) (b - c)`` as a :class:`CustomLoss`."""
    h = np.array(h, dtype=float)
    if np.any(h <= 0):
        raise ConfigError("diagonal entries must be positive")
    c = np.zeros_like(h) if center is None else np.array(center, dtype=float)

    def fun(b):
        r = b - c
        return 0.5 * float(r @ (h * r))

    def grad_fun(b):
        return h * (b - c)

    return CustomLoss(fun, grad_fun, h.size, float(h.min()), float(h.max()))


@dataclass
class StochasticOracle:
    """Seeded sampler for unbiased gradient estimates.

    ``bound_C`` is the declared constant with ``E||G||^2 <= C^2`` over the
    region the caller's iterates visit. The RNG state is owned by a single
    solver run.
    """

    rng: np.random.Generator
    bound_C: float


def finite_sum_oracle(loss: FiniteSumLoss, seed=0, radius=None):
    """Oracle sampling components uniformly with replacement.

    For quadratic pieces the tilted estimate ``G - s`` at a point within
    ``radius`` of the tilted minimizer has second moment at most
    ``radius^2 + noise_variance``; ``radius`` defaults to the largest anchor
    deviation, which bounds every iterate of ``1/(mu k)`` SGD after its
    first step.
    """
    if radius is None:
        dev = loss.anchors - loss.anchors.mean(axis=0)
        radius = float(np.sqrt(np.max(np.sum(dev * dev, axis=1))))
    c = float(np.sqrt(radius**2 + loss.noise_variance()))
    return StochasticOracle(np.random.default_rng(seed), c)


def grad(loss, beta):
    return loss.grad(beta)


def value(loss, beta):
    return loss.value(beta)


def argmin_tilted(loss, s):
    """Minimizer of ``f(b) - s^T b``; closed form only for the squared loss."""
    if loss.kind != "squared":
        raise NoClosedForm(f"no closed-form tilted minimizer for {loss.kind} loss")
    return loss.y + _check_dim(loss, s)


def conjugate_value(loss, s):
    """Convex conjugate ``f*(s) = 0.5 ||s||^2 + y^T s`` of the squared loss."""
    if loss.kind != "squared":
        raise NoClosedForm(f"no closed-form conjugate for {loss.kind} loss")
    s = _check_dim(loss, s)
    return 0.5 * float(s @ s) + float(loss.y @ s)


def stochastic_grad(loss, oracle: StochasticOracle, beta):
    """One unbiased sample of ``grad f(beta)``; advances ``oracle.rng``."""
    beta = _check_dim(loss, beta)
    if loss.kind == "finite_sum":
        i = oracle.rng.integers(loss.n_sam)
        return loss.component_grad(i, beta)
    if loss.kind == "custom" and loss.sample_grad is not None:
        return np.asarray(loss.sample_grad(beta, oracle.rng), dtype=float)
    raise ConfigError(f"stochastic gradients are unsupported for {loss.kind} loss")
