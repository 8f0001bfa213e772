"""Generalized dual gradient ascent (GDGA).

The primal problem ``min_b f(b) + lam * ||D b||_1`` is solved through its
dual ``min_{|a|_inf <= lam} f*(D^T a)`` by projected gradient steps on
``a``. The primal iterate is the tilted minimizer
``b(a) = argmin_b f(b) - a^T D b``, computed exactly for the squared loss
(:func:`solve_simplified`) or approximately by an inner subroutine
(:func:`solve_framework`).

Sign conventions: for ``f(b) = 0.5 ||b - y||^2`` the tilted minimizer is
``y + D^T a``, the dual objective is ``f*(D^T a)`` and the duality gap is
``Phi(b) + f*(D^T a) >= 0``.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import losses
from .exceptions import ConfigError, NoClosedForm, NumericalError
from .operators import LinearOperator, estimate_sigma
from .subroutines import (
    SubroutineKind,
    agd_minimize,
    sgd_minimize,
    svrg_minimize,
)

logger = logging.getLogger(__name__)

TRACE_HEADER = ("iter", "primal_obj", "dual_obj", "gap", "eta", "wall_ns")
STALL_WINDOW = 1000
STALL_DELTA = 1e-14


@dataclass(frozen=True)
class Problem:
    loss: object
    op: LinearOperator
    lam: float
    sigma: float

    def __post_init__(self):
        if self.op.cols != self.loss.dim:
            raise ConfigError(
                f"operator has {self.op.cols} columns but the loss has dimension {self.loss.dim}"
            )
        if not self.lam >= 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")

    @property
    def m(self):
        return self.op.rows

    @property
    def d(self):
        return self.op.cols


def make_problem(loss, op, lam, sigma=None, sigma_tol=1e-6, seed=0):
    """Bundle a problem, estimating ``sigma = lambda_max(D D^T)`` if not given."""
    if sigma is None:
        sigma = estimate_sigma(op, tol=sigma_tol, max_iters=50_000, seed=seed)
        if sigma == 0.0:
            # D D^T = 0, so any positive value bounds the spectrum
            sigma = 1.0
    return Problem(loss, op, float(lam), float(sigma))


@dataclass
class DualState:
    alpha: np.ndarray
    beta: np.ndarray
    t: int = 0


@dataclass(frozen=True)
class StepPolicy:
    """Fixed step or safeguarded Barzilai-Borwein step for the dual ascent.

    ``None`` values are resolved against the problem: ``eta`` and ``eta0``
    default to ``mu / (8 sigma)``, ``eta_max`` to ``10 / sigma``.
    """

    kind: str = "fixed"
    eta: float | None = None
    eta_min: float = 1e-6
    eta_max: float | None = None

    def __post_init__(self):
        if self.kind not in ("fixed", "bb"):
            raise ConfigError(f"unknown step policy {self.kind!r}")
        if self.eta is not None and self.eta <= 0:
            raise ConfigError("step size must be positive")
        if self.eta_min <= 0 or (self.eta_max is not None and self.eta_max < self.eta_min):
            raise ConfigError("need 0 < eta_min <= eta_max")

    @classmethod
    def fixed(cls, eta=None):
        return cls("fixed", eta)

    @classmethod
    def bb(cls, eta0=None, eta_min=1e-6, eta_max=None):
        return cls("bb", eta0, eta_min, eta_max)

    def resolve(self, p: Problem):
        default = p.loss.mu / (8.0 * p.sigma)
        eta = default if self.eta is None else self.eta
        if self.kind == "fixed" and eta >= p.loss.mu / (4.0 * p.sigma):
            raise ConfigError(
                f"fixed step {eta:g} outside (0, mu/(4 sigma)) = (0, {p.loss.mu / (4 * p.sigma):g})"
            )
        eta_max = 10.0 / p.sigma if self.eta_max is None else self.eta_max
        return eta, self.eta_min, max(eta_max, self.eta_min)


@dataclass(frozen=True)
class EpsHatPolicy:
    """Inner accuracy schedule: ``fixed`` or ``geometric`` down to ``floor``."""

    kind: str = "geometric"
    start: float = 1e-4
    factor: float = 0.5
    floor: float = 1e-12

    def __post_init__(self):
        if self.kind not in ("fixed", "geometric"):
            raise ConfigError(f"unknown eps_hat policy {self.kind!r}")
        if self.start <= 0 or self.floor <= 0 or not 0 < self.factor <= 1:
            raise ConfigError("invalid eps_hat policy parameters")

    @classmethod
    def fixed(cls, eps):
        return cls("fixed", eps)

    def at(self, t):
        if self.kind == "fixed":
            return self.start
        return max(self.floor, self.start * self.factor**t)


class TraceRow(NamedTuple):
    iter: int
    primal_obj: float
    dual_obj: float
    gap: float
    eta: float
    wall_ns: int


@dataclass
class SolveReport:
    trace: list
    termination: str
    final_state: DualState
    algo: str = ""
    oracle_calls: int = 0
    residuals: list | None = None
    extra: dict = field(default_factory=dict)

    @property
    def beta(self):
        return self.final_state.beta

    @property
    def iters(self):
        return len(self.trace)

    @property
    def final_obj(self):
        # the returned state need not be the last row (see solve_framework)
        return self.trace[self.final_state.t].primal_obj

    @property
    def final_gap(self):
        return self.trace[self.final_state.t].gap

    def gaps(self):
        return np.array([r.gap for r in self.trace])


def project_linf_ball(v, lam):
    if lam < 0:
        raise ConfigError("lambda must be >= 0")
    return np.clip(np.asarray(v, dtype=float), -lam, lam)


def dual_objective(p: Problem, alpha):
    """``f*(D^T alpha)``; minimized over the box by the dual problem."""
    return losses.conjugate_value(p.loss, p.op.apply_adjoint(alpha))


def dual_gradient(p: Problem, alpha, beta_star):
    """Gradient of the dual objective, ``D b(alpha)``.

    ``alpha`` is accepted for interface symmetry; the gradient only needs
    the tilted minimizer.
    """
    del alpha
    return p.op.apply(beta_star)


def primal_objective(p: Problem, beta):
    return p.loss.value(beta) + p.lam * float(np.abs(p.op.apply(beta)).sum())


def duality_gap(p: Problem, state: DualState):
    return primal_objective(p, state.beta) + dual_objective(p, state.alpha)


def tilted_minimizer(p: Problem, alpha):
    return losses.argmin_tilted(p.loss, p.op.apply_adjoint(alpha))


def gdga_step(p: Problem, state: DualState, eta, beta_t):
    """One projected ascent step ``alpha <- proj(alpha - eta D beta_t)``."""
    if eta <= 0:
        raise ConfigError("step size must be positive")
    alpha = project_linf_ball(state.alpha - eta * p.op.apply(beta_t), p.lam)
    return DualState(alpha, np.asarray(beta_t, dtype=float), state.t + 1)


def bb_stepsize(d_alpha, d_grad, eta_min, eta_max):
    """``<da, dg> / <dg, dg>`` clamped to ``[eta_min, eta_max]``."""
    dg2 = float(d_grad @ d_grad)
    if dg2 == 0.0:
        return eta_min
    eta = float(d_alpha @ d_grad) / dg2
    return min(max(eta, eta_min), eta_max)


class _StallMonitor:
    def __init__(self):
        self.best = np.inf
        self.best_t = 0

    def stalled(self, t, gap):
        if gap < self.best - STALL_DELTA:
            self.best, self.best_t = gap, t
            return False
        return t - self.best_t >= STALL_WINDOW


def solve_simplified(
    p: Problem, policy: StepPolicy | None = None, tol=1e-8, max_iters=100_000, callback=None
):
    """GDGA with the exact tilted minimizer ``b = y + D^T a`` (squared loss).

    Starts from ``a = 0``; stops once the duality gap is at most ``tol``.
    Each iteration costs one ``D`` and one ``D^T`` application.
    ``callback(t, alpha, beta)``, if given, sees every recorded iterate.
    """
    if p.loss.kind != "squared":
        raise NoClosedForm("solve_simplified needs the squared loss")
    policy = policy or StepPolicy.fixed()
    eta, eta_min, eta_max = policy.resolve(p)
    use_bb = policy.kind == "bb"
    y, lam, op = p.loss.y, p.lam, p.op
    # hot loop: call the operator kernels directly, shapes are fixed here;
    # ndarray.dot is markedly cheaper than @ or .sum() on short vectors
    fwd, adj = op._matvec, op._rmatvec
    ones = np.ones(op.rows)
    clock = time.perf_counter_ns
    t0 = clock()

    alpha = np.zeros(op.rows)
    s = adj(alpha)
    g = fwd(y + s)
    alpha_prev = g_prev = None
    trace = []
    append = trace.append
    monitor = _StallMonitor()
    termination = "max_iters"
    for t in range(max_iters):
        if use_bb and alpha_prev is not None:
            dg = g - g_prev
            dg2 = float(dg.dot(dg))
            if dg2 == 0.0:
                eta = eta_min
            else:
                eta = min(max(float((alpha - alpha_prev).dot(dg)) / dg2, eta_min), eta_max)
        # with b = y + s and g = D b: Phi(b) + f*(s) = sum_i (lam |g_i| + alpha_i g_i),
        # a sum of nonnegative terms, so no cancellation near the optimum
        l1 = float(np.abs(g).dot(ones))
        gap = lam * l1 + float(alpha.dot(g))
        primal = 0.5 * float(s.dot(s)) + lam * l1
        append(TraceRow(t, primal, primal - gap, gap, eta, clock() - t0))
        rec_alpha, rec_s = alpha, s
        if callback is not None:
            callback(t, alpha, y + s)
        if gap <= tol:
            termination = "gap_tol"
            break
        if monitor.stalled(t, gap):
            termination = "stalled"
            break
        alpha_prev, g_prev = alpha, g
        alpha = alpha - eta * g
        np.minimum(alpha, lam, out=alpha)
        np.maximum(alpha, -lam, out=alpha)
        s = adj(alpha)
        g = fwd(y + s)
    state = DualState(rec_alpha, y + rec_s, len(trace) - 1)
    return SolveReport(trace, termination, state, algo="gdga", oracle_calls=len(trace))


def _initial_beta(loss):
    if loss.kind == "squared":
        return np.array(loss.y)
    if loss.kind == "finite_sum":
        return loss.anchors.mean(axis=0)
    return np.zeros(loss.dim)


def solve_framework(
    p: Problem,
    sub: SubroutineKind,
    policy: StepPolicy | None = None,
    eps_hat_policy: EpsHatPolicy | None = None,
    tol=1e-8,
    max_iters=100_000,
    seed=0,
    oracle=None,
    beta_init=None,
    callback=None,
):
    """GDGA with an inexact inner solve of ``min_b f(b) - a^T D b``.

    Each outer iteration warm-starts the subroutine from the previous primal
    iterate. When ``f*`` has no closed form, the dual value is bounded above
    by ``s^T b - f(b) + (ell/2) * dist^2`` using the subroutine's certified
    distance (or mean squared distance for stochastic subroutines), so the
    recorded gap stays an upper bound, in expectation for the stochastic case.
    The returned state is the recorded iterate with the smallest gap; with
    noisy subroutines it is usually not the last one.

    ``callback(t, alpha, beta)`` works as in :func:`solve_simplified`.
    ``eps_hat_policy`` defaults to geometric for AGD/SVRG and to a fixed
    ``1e-4`` for SGD, whose cost grows as ``1/eps_hat^2``.
    """
    policy = policy or StepPolicy.fixed()
    if eps_hat_policy is None:
        eps_hat_policy = EpsHatPolicy.fixed(1e-4) if sub.name == "sgd" else EpsHatPolicy()
    eta, eta_min, eta_max = policy.resolve(p)
    loss, lam, op = p.loss, p.lam, p.op
    rng = np.random.default_rng(seed)
    if sub.name == "sgd" and oracle is None:
        if loss.kind != "finite_sum":
            raise ConfigError("SGD subroutine needs a finite-sum loss or an explicit oracle")
        oracle = losses.finite_sum_oracle(loss, seed=rng)
    closed_form = loss.kind == "squared"
    t0 = time.perf_counter_ns()

    alpha = np.zeros(op.rows)
    beta_prev = _initial_beta(loss) if beta_init is None else np.asarray(beta_init, dtype=float)
    alpha_prev = g_prev = None
    trace = []
    calls = 0
    monitor = _StallMonitor()
    termination = "max_iters"
    beta = beta_prev
    best = (np.inf, alpha, beta, 0)
    for t in range(max_iters):
        s = op.apply_adjoint(alpha)
        eps_t = eps_hat_policy.at(t)
        try:
            if sub.name == "agd":
                inner = agd_minimize(loss, s, beta_prev, eps_t)
                sq_dist = inner.certified_eps**2
            elif sub.name == "svrg":
                inner = svrg_minimize(
                    loss, s, beta_prev, eps_t, seed=rng, epoch_len=sub.epoch_len, momentum=sub.momentum
                )
                sq_dist = inner.certified_eps
            else:
                inner = sgd_minimize(loss, oracle, s, beta_prev, eps_t)
                sq_dist = inner.certified_eps
        except NumericalError as exc:
            exc.context.setdefault("outer_iter", t)
            raise NumericalError(f"subroutine failed at outer iteration {t}: {exc}", **exc.context) from exc
        beta = inner.beta
        calls += inner.oracle_calls
        g = op.apply(beta)
        # a warm start that already meets eps_hat comes back unchanged; then
        # dg = 0 says nothing about curvature and the eta_min fallback would
        # freeze alpha, so the previous step is kept instead
        if policy.kind == "bb" and alpha_prev is not None and not np.array_equal(beta, beta_prev):
            eta = bb_stepsize(alpha - alpha_prev, g - g_prev, eta_min, eta_max)
        f_beta = loss.value(beta)
        primal = f_beta + lam * float(np.abs(g).sum())
        if closed_form:
            fbar = losses.conjugate_value(loss, s)
        else:
            fbar = float(s @ beta) - f_beta + 0.5 * loss.ell * sq_dist
        gap = primal + fbar
        trace.append(TraceRow(t, primal, -fbar, gap, eta, time.perf_counter_ns() - t0))
        if gap <= best[0]:
            best = (gap, alpha, beta, t)
        if callback is not None:
            callback(t, alpha, beta)
        if gap <= tol:
            termination = "gap_tol"
            break
        if monitor.stalled(t, gap):
            termination = "stalled"
            break
        alpha_prev, g_prev = alpha, g
        alpha = np.clip(alpha - eta * g, -lam, lam)
        beta_prev = beta
    _, alpha, beta, t = best
    state = DualState(alpha, beta, t)
    return SolveReport(trace, termination, state, algo=f"gdga-{sub.name}", oracle_calls=calls)


def format_float(x):
    return format(float(x), ".17g")


def write_trace_csv(report: SolveReport, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in report.trace:
            w.writerow(
                [r.iter, format_float(r.primal_obj), format_float(r.dual_obj),
                 format_float(r.gap), format_float(r.eta), int(r.wall_ns)]
            )


def read_trace_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise ConfigError(f"{path}: not a trace file")
    return [
        TraceRow(int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4]), int(r[5]))
        for r in rows[1:]
    ]
