"""Standard ADMM baseline for the squared-loss problem.

Splits ``min_b 0.5||b - y||^2 + lam ||z||_1`` subject to ``D b = z`` and runs
the scaled-form iteration. The linear system in the b-update is solved by
conjugate gradients on the operator ``I + rho D^T D``, so nothing is ever
factorized or densified.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator as ScipyOperator
from scipy.sparse.linalg import cg

from .dual import DualState, Problem, SolveReport, TraceRow
from .exceptions import ConfigError, NoClosedForm, NumericalError

BALANCE_RATIO = 10.0
BALANCE_FACTOR = 2.0


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 1.0
    inner_tol: float = 1e-12
    max_iters: int = 20_000
    tol: float = 1e-8
    # residual balancing: rescale rho by 2 whenever one residual is 10x the other
    balance: bool = False

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if not (self.inner_tol > 0 and self.tol > 0):
            raise ConfigError("tolerances must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")


def soft_threshold(v, t):
    """Componentwise ``sign(v) * max(|v| - t, 0)``."""
    if t < 0:
        raise ConfigError("threshold must be >= 0")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _system(op, rho):
    d = op.cols
    return ScipyOperator(
        (d, d), matvec=lambda x: x + rho * op.apply_adjoint(op.apply(np.ravel(x))), dtype=float
    )


def admm_solve(p: Problem, cfg: AdmmConfig | None = None) -> SolveReport:
    """Run scaled ADMM from ``b = y, z = D y, u = 0``.

    Each trace row reports ``Phi(b)`` and the dual value of the feasible
    multiplier estimate ``a = clip(-rho u, -lam, lam)``, so the gap column is
    a genuine duality gap. The ``eta`` column holds the current ``rho``.
    Stops when ``max(||D b - z||, rho ||D^T (z - z_prev)||) <= tol``.
    """
    cfg = cfg or AdmmConfig()
    if p.loss.kind != "squared":
        raise NoClosedForm("admm_solve is implemented for the squared loss only")
    y, lam, op = p.loss.y, p.lam, p.op
    rho = cfg.rho
    d = op.cols
    t0 = time.perf_counter_ns()

    beta = np.array(y)
    z = op.apply(beta)
    u = np.zeros_like(z)
    trace, residuals = [], []
    termination = "max_iters"
    for t in range(cfg.max_iters):
        rhs = y + rho * op.apply_adjoint(z - u)
        beta, info = cg(_system(op, rho), rhs, x0=beta, rtol=cfg.inner_tol, atol=0.0, maxiter=10 * d)
        if info != 0:
            raise NumericalError(
                f"CG did not reach rtol={cfg.inner_tol:g} in {10 * d} iterations at ADMM step {t}",
                admm_iter=t,
                rho=rho,
            )
        g = op.apply(beta)
        z_prev = z
        z = soft_threshold(g + u, lam / rho)
        u = u + g - z
        r_norm = float(np.linalg.norm(g - z))
        s_norm = rho * float(np.linalg.norm(op.apply_adjoint(z - z_prev)))
        residual = max(r_norm, s_norm)
        residuals.append(residual)

        alpha = np.clip(-rho * u, -lam, lam)
        s = op.apply_adjoint(alpha)
        r = beta - y
        primal = 0.5 * float(r @ r) + lam * float(np.abs(g).sum())
        fbar = 0.5 * float(s @ s) + float(y @ s)
        trace.append(TraceRow(t, primal, -fbar, primal + fbar, rho, time.perf_counter_ns() - t0))
        if not np.isfinite(residual):
            raise NumericalError(f"ADMM diverged at iteration {t}", admm_iter=t, rho=rho)
        if residual <= cfg.tol:
            termination = "residual_tol"
            break
        if cfg.balance:
            if r_norm > BALANCE_RATIO * s_norm:
                rho *= BALANCE_FACTOR
                u /= BALANCE_FACTOR
            elif s_norm > BALANCE_RATIO * r_norm:
                rho /= BALANCE_FACTOR
                u *= BALANCE_FACTOR
    state = DualState(alpha, beta, len(trace) - 1)
    return SolveReport(trace, termination, state, algo="admm", residuals=residuals)
