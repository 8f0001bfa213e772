"""Deterministic problem instances shared by several test modules."""

import numpy as np

from fcsolve import SquaredLoss, build_univariate_diff, make_problem


def piecewise_constant(n, rng, n_segments=4, noise=0.5, scale=2.0):
    cuts = np.sort(rng.choice(np.arange(1, n), n_segments - 1, replace=False))
    levels = rng.normal(0.0, scale, n_segments)
    y = np.repeat(levels, np.diff(np.concatenate([[0], cuts, [n]])))
    return y + rng.normal(0.0, noise, n)


def fused_lasso_200():
    """n=200 piecewise-constant signal with lambda = 5."""
    y = piecewise_constant(200, np.random.default_rng(2024), n_segments=5)
    return make_problem(SquaredLoss(y), build_univariate_diff(200, 0), 5.0)


def trend_100_k1(lam=0.2):
    """n=100 piecewise-linear signal for second-order trend filtering."""
    rng = np.random.default_rng(7)
    x = np.arange(100)
    y = np.interp(x, [0, 25, 50, 75, 99], [0, 5, 1, 4, 2]) + rng.normal(0, 0.5, 100)
    return make_problem(SquaredLoss(y), build_univariate_diff(100, 1), lam)


def synthetic_image(h=32, w=32, seed=11):
    """Bright disc on a horizontal ramp plus Gaussian noise, values near [0, 1]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    disc = ((yy - h / 2) ** 2 + (xx - w / 2) ** 2 <= (min(h, w) / 4) ** 2) * 0.6
    img = disc + 0.2 * xx / max(w - 1, 1) + rng.normal(0, 0.1, (h, w))
    return img.ravel()
