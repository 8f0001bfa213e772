"""Convergence analytics: rate fits, distance curves and the error-bound study."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .dual import Problem, SolveReport, StepPolicy, solve_simplified
from .exceptions import ConfigError, InsufficientData, NumericalError
from .oracle import ENUMERATION_MAX_M, boxqp_enumerate

MIN_FIT_POINTS = 5
SKIP_DIST = 1e-10


@dataclass(frozen=True)
class RateFit:
    slope: float  # change of log10(gap) per iteration
    r2: float
    window: tuple
    flat: bool = False
    n_points: int = 0


def fit_linear_rate(trace, lo=1e-9, hi=1e-2):
    """Least-squares line through ``(t, log10 gap_t)`` for gaps in ``[lo, hi]``.

    ``trace`` is a :class:`SolveReport`, a list of trace rows, or a plain
    sequence of gaps indexed by iteration. A constant window gives slope 0
    and ``r2 = 0`` with ``flat=True``.
    """
    if not 0 < lo < hi:
        raise ConfigError("need 0 < lo < hi")
    if isinstance(trace, SolveReport):
        gaps = trace.gaps()
    else:
        rows = list(trace)
        gaps = np.array([r.gap if hasattr(r, "gap") else r for r in rows], dtype=float)
    t = np.arange(gaps.size, dtype=float)
    keep = (gaps >= lo) & (gaps <= hi)
    if keep.sum() < MIN_FIT_POINTS:
        raise InsufficientData(
            f"only {int(keep.sum())} gaps in [{lo:g}, {hi:g}], need {MIN_FIT_POINTS}"
        )
    t, lg = t[keep], np.log10(gaps[keep])
    window = (int(t[0]), int(t[-1]))
    tc = t - t.mean()
    lc = lg - lg.mean()
    ss_tot = float(lc @ lc)
    if ss_tot == 0.0:
        return RateFit(0.0, 0.0, window, flat=True, n_points=t.size)
    slope = float(tc @ lc) / float(tc @ tc)
    ss_res = float(np.sum((lc - slope * tc) ** 2))
    r2 = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return RateFit(slope, r2, window, n_points=t.size)


def oracle_distance_curve(p: Problem, beta_star, policy: StepPolicy | None = None, tol=1e-10,
                          max_iters=100_000):
    """``||b_t - b*||`` along a simplified-GDGA run, one entry per iteration."""
    beta_star = np.asarray(beta_star, dtype=float)
    dist = []
    solve_simplified(
        p, policy, tol=tol, max_iters=max_iters,
        callback=lambda t, a, b: dist.append(float(np.linalg.norm(b - beta_star))),
    )
    return np.array(dist)


class OptimalSetProjector:
    """Euclidean projection onto ``{a in box : D^T a = s*}``.

    When ``D^T`` has trivial kernel the set is the single point ``a*``.
    Otherwise every pattern of coordinates pinned at ``-lam`` / ``+lam``
    gives an affine piece; the projection onto a piece is a least-squares
    correction, and the closest box-feasible candidate over all pieces is
    the exact projection (the true projection is feasible for its own
    pattern, and no feasible point can be closer).
    """

    def __init__(self, p: Problem, alpha_star):
        if p.m > ENUMERATION_MAX_M:
            raise ConfigError(f"optimal-set projection limited to m <= {ENUMERATION_MAX_M}")
        self.lam = p.lam
        self.alpha_star = np.asarray(alpha_star, dtype=float)
        dt = p.op.to_dense().T  # d x m
        self.unique = p.lam == 0.0 or np.linalg.matrix_rank(dt) == p.m
        self.pieces = []
        if self.unique:
            return
        s_star = dt @ self.alpha_star
        tol = 1e-9 * (1.0 + np.abs(s_star).max())
        for pattern in itertools.product((-1, 0, 1), repeat=p.m):
            pat = np.array(pattern)
            free = pat == 0
            fixed_val = np.where(pat < 0, -p.lam, p.lam)[~free]
            rhs = s_star - dt[:, ~free] @ fixed_val
            if not free.any():
                if np.abs(rhs).max() <= tol:
                    self.pieces.append((free, fixed_val, None, None, None))
                continue
            a = dt[:, free]
            a_pinv = np.linalg.pinv(a)
            if np.abs(a @ (a_pinv @ rhs) - rhs).max() > tol:
                continue  # this piece does not meet the affine constraint
            self.pieces.append((free, fixed_val, a, a_pinv, rhs))

    def project(self, alpha):
        """Project a batch ``(k, m)`` (or a single vector) onto the optimal set."""
        alpha = np.asarray(alpha, dtype=float)
        single = alpha.ndim == 1
        batch = np.atleast_2d(alpha)
        if self.unique:
            out = np.broadcast_to(self.alpha_star, batch.shape).copy()
            return out[0] if single else out
        best = np.full(batch.shape[0], np.inf)
        out = np.empty_like(batch)
        slack = 1e-12 * (1.0 + self.lam)
        for free, fixed_val, a, a_pinv, rhs in self.pieces:
            cand = np.empty_like(batch)
            cand[:, ~free] = fixed_val
            if a is not None:
                af = batch[:, free]
                cand[:, free] = af + (rhs[None, :] - af @ a.T) @ a_pinv.T
            ok = np.all(np.abs(cand) <= self.lam + slack, axis=1)
            dist = np.linalg.norm(cand - batch, axis=1)
            better = ok & (dist < best)
            best[better] = dist[better]
            out[better] = np.clip(cand[better], -self.lam, self.lam)
        if np.isinf(best).any():
            raise ConfigError("optimal-set projection found no feasible piece")
        return out[0] if single else out


def _residual_map(p: Problem, batch):
    # a - proj_box(a - grad fbar(a)) with grad fbar(a) = D (y + D^T a)
    op, y = p.op, p.loss.y
    grads = np.stack([op.apply(y + op.apply_adjoint(a)) for a in batch])
    return batch - np.clip(batch - grads, -p.lam, p.lam)


def error_bound_ratio(p: Problem, alpha, projector: OptimalSetProjector | None = None):
    """``||a - proj_opt(a)|| / ||a - proj_box(a - grad fbar(a))||`` at one point.

    ``alpha`` need not be feasible. Returns ``nan`` when both sides vanish.
    """
    if projector is None:
        projector = OptimalSetProjector(p, boxqp_enumerate(p).alpha_star)
    alpha = np.asarray(alpha, dtype=float)
    lhs = float(np.linalg.norm(alpha - projector.project(alpha)))
    rhs = float(np.linalg.norm(_residual_map(p, alpha[None, :])[0]))
    if lhs == 0.0 and rhs == 0.0:
        return float("nan")
    return lhs / rhs


def error_bound_ratio_study(p: Problem, samples=1000, seed=0):
    """Sample ``a`` uniformly on the box and summarize the error-bound ratio.

    Points within ``1e-10`` of the optimal set are skipped. The returned
    dict is JSON-ready: ``max_ratio, q50, q90, q99, samples, seed`` plus the
    number of skipped draws.
    """
    if p.m > ENUMERATION_MAX_M:
        raise ConfigError(f"error-bound study needs m <= {ENUMERATION_MAX_M}, got {p.m}")
    if samples < 1:
        raise ConfigError("samples must be >= 1")
    sol = boxqp_enumerate(p)
    projector = OptimalSetProjector(p, sol.alpha_star)
    rng = np.random.default_rng(seed)
    batch = rng.uniform(-p.lam, p.lam, size=(samples, p.m))
    lhs = np.linalg.norm(batch - projector.project(batch), axis=1)
    rhs = np.linalg.norm(_residual_map(p, batch), axis=1)
    keep = lhs > SKIP_DIST
    if not keep.any():
        raise InsufficientData("every sample lies on the optimal set")
    ratios = lhs[keep] / rhs[keep]
    if not np.all(np.isfinite(ratios)):
        raise NumericalError("non-finite error-bound ratio encountered", seed=seed)
    q50, q90, q99 = np.quantile(ratios, [0.5, 0.9, 0.99])
    return {
        "max_ratio": float(ratios.max()),
        "q50": float(q50),
        "q90": float(q90),
        "q99": float(q99),
        "samples": int(samples),
        "seed": int(seed),
        "skipped": int(samples - keep.sum()),
    }


def summary_json(summary):
    return json.dumps(summary, sort_keys=True)
