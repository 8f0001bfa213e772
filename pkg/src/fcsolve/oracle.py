"""Exact reference solvers for small or one-dimensional problems."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError

ENUMERATION_MAX_M = 8


@dataclass
class OracleSolution:
    beta_star: np.ndarray
    alpha_star: np.ndarray | None
    obj_star: float
    # every KKT point found by enumeration (optimal set samples)
    alternatives: list = field(default_factory=list)


def _fill(x, start, stop, value):
    # C-style do/while: writes x[start..stop], at least one entry
    stop = max(stop, start)
    x[start:stop + 1] = value
    return stop + 1


def _tv1d_direct(y, lam):
    # Condat's direct algorithm for min 0.5||y - x||^2 + lam * sum |x[i+1] - x[i]|
    n = y.size
    x = np.empty(n)
    k = k0 = kplus = kminus = 0
    umin, umax = lam, -lam
    vmin, vmax = y[0] - lam, y[0] + lam
    twolam, minlam = 2.0 * lam, -lam
    while True:
        while k == n - 1:
            if umin < 0.0:
                k0 = _fill(x, k0, kminus, vmin)
                k = kminus = k0
                vmin = y[k]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                k0 = _fill(x, k0, kplus, vmax)
                k = kplus = k0
                vmax = y[k]
                umax = minlam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                x[k0:k + 1] = vmin
                return x
        umin += y[k + 1] - vmin
        if umin < minlam:
            k0 = _fill(x, k0, kminus, vmin)
            k = kplus = kminus = k0
            vmin = y[k]
            vmax = vmin + twolam
            umin, umax = lam, minlam
            continue
        umax += y[k + 1] - vmax
        if umax > lam:
            k0 = _fill(x, k0, kplus, vmax)
            k = kplus = kminus = k0
            vmax = y[k]
            vmin = vmax - twolam
            umin, umax = lam, minlam
            continue
        k += 1
        if umin >= lam:
            kminus = k
            vmin += (umin - lam) / (kminus - k0 + 1)
            umin = lam
        if umax <= minlam:
            kplus = k
            vmax += (umax + lam) / (kplus - k0 + 1)
            umax = minlam


def tv1d_exact(y, lam):
    """Exact 1-D fused lasso ``min 0.5||y - b||^2 + lam ||D1 b||_1``.

    Uses Condat's direct (taut-string type) algorithm, linear time in
    practice. The dual vector is recovered from ``b - y = D1^T a``.
    """
    if lam < 0:
        raise ConfigError("lambda must be >= 0")
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ConfigError("tv1d_exact needs a non-empty vector")
    beta = y.copy() if lam == 0 else _tv1d_direct(y, float(lam))
    alpha = np.clip(np.cumsum(y - beta)[:-1], -lam, lam) if y.size > 1 else None
    obj = 0.5 * float(np.sum((y - beta) ** 2)) + lam * float(np.abs(np.diff(beta)).sum())
    return OracleSolution(beta, alpha, obj)


def _dense_dual(p):
    if p.loss.kind != "squared":
        raise ConfigError("the box-QP oracle needs the squared loss")
    if p.m > ENUMERATION_MAX_M:
        raise ConfigError(f"enumeration limited to m <= {ENUMERATION_MAX_M}, got m = {p.m}")
    D = p.op.to_dense()
    return D, D @ D.T, D @ p.loss.y


def enumerate_box_kkt(A, b, lam, lower=None, upper=None, tol=1e-9):
    """All KKT points of ``min 0.5 a^T A a + b^T a`` over ``lower <= a <= upper``.

    Every one of the ``3^m`` patterns fixes some coordinates at a bound and
    solves the stationarity system on the rest by least squares
    (minimum-norm on singular blocks). A candidate is kept when that system
    is consistent, the free coordinates are feasible and the multipliers of
    the fixed coordinates have the right sign. Returns a list of
    ``(value, alpha)`` pairs.
    """
    m = b.size
    lo = np.full(m, -lam) if lower is None else np.asarray(lower, dtype=float)
    hi = np.full(m, lam) if upper is None else np.asarray(upper, dtype=float)
    scale = 1.0 + np.abs(b).max(initial=0.0) + np.abs(A).max(initial=0.0) * max(
        np.abs(lo).max(initial=0.0), np.abs(hi).max(initial=0.0)
    )
    tol_abs = tol * scale
    out = []
    for pattern in itertools.product((-1, 0, 1), repeat=m):
        pat = np.array(pattern)
        alpha = np.where(pat < 0, lo, np.where(pat > 0, hi, 0.0))
        free = pat == 0
        if free.any():
            rhs = -(b[free] + A[np.ix_(free, ~free)] @ alpha[~free])
            sol = np.linalg.lstsq(A[np.ix_(free, free)], rhs, rcond=None)[0]
            alpha[free] = sol
            if np.abs(A[np.ix_(free, free)] @ sol - rhs).max() > tol_abs:
                continue
            if np.any(sol < lo[free] - tol_abs) or np.any(sol > hi[free] + tol_abs):
                continue
            alpha[free] = np.clip(sol, lo[free], hi[free])
        g = A @ alpha + b
        if np.any(g[pat > 0] > tol_abs) or np.any(g[pat < 0] < -tol_abs):
            continue
        out.append((0.5 * float(alpha @ A @ alpha) + float(b @ alpha), alpha))
    return out


def boxqp_enumerate(p):
    """Exact dual solution by KKT enumeration (``m <= 8``, squared loss).

    Minimizes ``0.5 ||D^T a||^2 + y^T D^T a`` over the box, then recovers
    ``b* = y + D^T a*``. Among optimal points the lexicographically smallest
    ``a`` is returned; all of them are kept in ``alternatives``.
    """
    D, A, b = _dense_dual(p)
    kkt = enumerate_box_kkt(A, b, p.lam)
    if not kkt:
        raise ConfigError("enumeration found no KKT point")
    best = min(v for v, _ in kkt)
    tie = 1e-10 * (1.0 + abs(best))
    optimal = [a for v, a in kkt if v <= best + tie]
    alpha = min(optimal, key=lambda a: tuple(a))
    beta = p.loss.y + D.T @ alpha
    obj = 0.5 * float(np.sum((beta - p.loss.y) ** 2)) + p.lam * float(np.abs(D @ beta).sum())
    return OracleSolution(beta, alpha, obj, optimal)


def lambda_max(op, y):
    """Smallest ``lam`` for which the solution lies in the null space of ``D``.

    Computed densely as ``||(D D^T)^+ D y||_inf``; small problems only.
    """
    D = op.to_dense()
    return float(np.abs(np.linalg.pinv(D @ D.T) @ (D @ np.asarray(y, dtype=float))).max())
