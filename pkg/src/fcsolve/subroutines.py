"""Inner solvers for the tilted problem ``min_b f(b) - s^T b``.

Each returns an :class:`InnerResult` with the number of (component)
gradient evaluations spent and the accuracy it certifies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, NumericalError
from .losses import StochasticOracle, stochastic_grad

SVRG_BUDGET_CONST = 10
# extra epochs allowed beyond the planned budget, as a multiple of it
SVRG_EXTENSION_CAP = 100


@dataclass(frozen=True)
class SubroutineKind:
    name: str
    epoch_len: int | None = None
    momentum: float = 0.5

    def __post_init__(self):
        if self.name not in ("agd", "svrg", "sgd"):
            raise ConfigError(f"unknown subroutine {self.name!r}")
        if self.epoch_len is not None and self.epoch_len < 1:
            raise ConfigError("epoch_len must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")

    @classmethod
    def agd(cls):
        return cls("agd")

    @classmethod
    def svrg(cls, epoch_len=None, momentum=0.5):
        return cls("svrg", epoch_len, momentum)

    @classmethod
    def sgd(cls):
        return cls("sgd")


@dataclass
class InnerResult:
    beta: np.ndarray
    oracle_calls: int
    # bound on ||beta - beta*|| (agd) or on E||beta - beta*||^2 (svrg, sgd)
    certified_eps: float


def _finite(v, where, **ctx):
    if not np.all(np.isfinite(v)):
        raise NumericalError(f"non-finite iterate in {where}", **ctx)


def agd_minimize(loss, tilt, beta_init, eps_hat):
    """Nesterov's constant-momentum method with step ``1/ell``.

    Stops as soon as ``||grad f(b) - tilt|| / mu <= eps_hat``, which bounds
    the distance to the tilted minimizer by strong convexity.
    """
    if eps_hat <= 0:
        raise ConfigError("eps_hat must be positive")
    mu, ell = loss.mu, loss.ell
    sk = math.sqrt(ell / mu)
    mom = (sk - 1.0) / (sk + 1.0)
    tilt = np.asarray(tilt, dtype=float)
    x = np.array(beta_init, dtype=float)
    y = x
    g = loss.grad(y) - tilt
    calls = 1
    cert = float(np.linalg.norm(g)) / mu
    if cert <= eps_hat:
        return InnerResult(y, calls, cert)
    cap = int(10 * sk * math.log(cert / eps_hat)) + 100
    for _ in range(cap):
        x_new = y - g / ell
        y = x_new + mom * (x_new - x)
        x = x_new
        g = loss.grad(y) - tilt
        calls += 1
        cert = float(np.linalg.norm(g)) / mu
        _finite(y, "agd_minimize", oracle_calls=calls)
        if cert <= eps_hat:
            return InnerResult(y, calls, cert)
    raise NumericalError(
        f"AGD did not reach eps_hat={eps_hat:g} within {cap} iterations (certificate {cert:g})",
        oracle_calls=calls,
        certificate=cert,
    )


def svrg_budget(n_sam, kappa, r0, eps_hat, c=SVRG_BUDGET_CONST):
    """Component-gradient budget ``n + ceil(c sqrt(kappa n) log(r0 kappa^2 / eps))``."""
    log_term = max(math.log(r0 * kappa**2 / eps_hat), 1.0)
    return n_sam + math.ceil(c * math.sqrt(kappa * n_sam) * log_term)


def svrg_minimize(loss, tilt, beta_init, eps_hat, seed=0, epoch_len=None, momentum=0.5):
    """Accelerated variance-reduced gradient (Katyusha-style) on a finite sum.

    The strong convexity is moved into the proximal term:
    ``f_i'(b) = f_i(b) - mu/2 ||b||^2`` is smooth and convex and
    ``psi(b) = mu/2 ||b||^2 - s^T b`` is handled exactly in the mirror step.
    Each epoch takes a full-gradient snapshot, then ``epoch_len`` inner steps
    mixing the snapshot with weight ``momentum`` (negative momentum). The
    mirror step size is ``max(2/(3 ell), 1/sqrt(3 m mu ell))``.

    The planned budget of :func:`svrg_budget` component gradients is always
    spent in whole epochs. The full gradient taken at every snapshot also
    gives the exact certificate ``||grad f(snap) - s|| / mu``; if it still
    exceeds ``eps_hat`` once the budget is used, further epochs run until it
    does. ``certified_eps`` is the square of that certificate, so it bounds
    ``||b - b*||^2`` outright and ``E||b - b*||^2`` a fortiori.
    """
    if loss.kind != "finite_sum":
        raise ConfigError("svrg_minimize needs a finite-sum loss")
    if eps_hat <= 0:
        raise ConfigError("eps_hat must be positive")
    rng = np.random.default_rng(seed)
    n = loss.n_sam
    m = epoch_len or 2 * n
    mu, ell = loss.mu, loss.ell
    tilt = np.asarray(tilt, dtype=float)
    tau2 = momentum
    tau1 = min(math.sqrt(m * mu / (3.0 * ell)), 0.5, 1.0 - tau2)
    step = 1.0 / (3.0 * tau1 * ell)
    log_w = math.log1p(step * mu)
    weights = np.exp((np.arange(m) - (m - 1)) * log_w)

    snap = np.array(beta_init, dtype=float)
    full = loss.grad(snap)
    calls = n
    cert = float(np.linalg.norm(full - tilt)) / mu
    if cert == 0.0:
        return InnerResult(snap, calls, 0.0)
    budget = svrg_budget(n, ell / mu, cert, eps_hat)
    cap = SVRG_EXTENSION_CAP * budget
    y = z = snap
    while calls < budget or cert > eps_hat:
        if calls > cap:
            raise NumericalError(
                f"SVRG certificate {cert:g} still above eps_hat={eps_hat:g} after {calls} calls",
                oracle_calls=calls,
                certificate=cert,
            )
        full_shift = full - mu * snap
        acc = np.zeros_like(snap)
        for j in range(m):
            x = tau1 * z + tau2 * snap + (1.0 - tau1 - tau2) * y
            i = rng.integers(n)
            g = full_shift + (loss.component_grad(i, x) - mu * x) - (
                loss.component_grad(i, snap) - mu * snap
            )
            z_new = (z - step * g + step * tilt) / (1.0 + step * mu)
            y = x + tau1 * (z_new - z)
            z = z_new
            acc += weights[j] * y
        calls += 2 * m
        snap = acc / weights.sum()
        _finite(snap, "svrg_minimize", oracle_calls=calls)
        full = loss.grad(snap)
        calls += n
        cert = float(np.linalg.norm(full - tilt)) / mu
    return InnerResult(snap, calls, cert**2)


def sgd_budget(bound_C, mu, eps_hat):
    return max(1, math.ceil(4.0 * bound_C**2 / (mu**2 * eps_hat**2)))


def sgd_minimize(loss, oracle: StochasticOracle, tilt, beta_init, eps_hat):
    """SGD with step ``1/(mu k)`` for exactly ``ceil(4 C^2 / (mu^2 eps^2))`` steps.

    Returns the last iterate; ``certified_eps`` is ``eps_hat^2``, the bound
    on ``E||b - b*||^2``.
    """
    if eps_hat <= 0:
        raise ConfigError("eps_hat must be positive")
    mu = loss.mu
    n_steps = sgd_budget(oracle.bound_C, mu, eps_hat)
    tilt = np.asarray(tilt, dtype=float)
    beta = np.array(beta_init, dtype=float)
    for k in range(1, n_steps + 1):
        g = stochastic_grad(loss, oracle, beta) - tilt
        beta = beta - g / (mu * k)
    _finite(beta, "sgd_minimize", oracle_calls=n_steps)
    return InnerResult(beta, n_steps, eps_hat**2)
