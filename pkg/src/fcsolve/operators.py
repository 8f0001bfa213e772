"""Matrix-free difference operators.

Every solver in the package touches the penalty matrix ``D`` only through
:meth:`LinearOperator.apply` and :meth:`LinearOperator.apply_adjoint`.
Three structured families are provided (univariate trend filtering, graph
trend filtering and l1 convex clustering) plus a dense wrapper used for
small problems and tests.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .exceptions import ConfigError, NumericalError

logger = logging.getLogger(__name__)

DENSE_LIMIT = 2048


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


class LinearOperator:
    """Abstract ``m x d`` linear map with an exact adjoint.

    Subclasses implement ``_matvec`` and ``_rmatvec``; the public methods
    check lengths. Instances are immutable once constructed.
    """

    kind: tuple = ("abstract",)

    def __init__(self, rows, cols):
        if rows < 1 or cols < 1:
            raise ConfigError(f"operator shape must be positive, got {rows}x{cols}")
        object.__setattr__(self, "_shape", (int(rows), int(cols)))

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    @property
    def rows(self):
        return self._shape[0]

    @property
    def cols(self):
        return self._shape[1]

    @property
    def shape(self):
        return self._shape

    def apply(self, x):
        """Return ``D @ x``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.cols,):
            raise ConfigError(f"apply expects a vector of length {self.cols}, got shape {x.shape}")
        return self._matvec(x)

    def apply_adjoint(self, y):
        """Return ``D.T @ y``."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.rows,):
            raise ConfigError(
                f"apply_adjoint expects a vector of length {self.rows}, got shape {y.shape}"
            )
        return self._rmatvec(y)

    def to_dense(self):
        """Materialize ``D`` column by column. Only for ``cols <= DENSE_LIMIT``."""
        if self.cols > DENSE_LIMIT:
            raise ConfigError(f"refusing to densify an operator with {self.cols} columns")
        out = np.empty(self.shape)
        e = np.zeros(self.cols)
        for j in range(self.cols):
            e[j] = 1.0
            out[:, j] = self._matvec(e)
            e[j] = 0.0
        return out

    def __repr__(self):
        return f"{type(self).__name__}(kind={self.kind!r}, shape={self.shape})"

    def _matvec(self, x):
        raise NotImplementedError

    def _rmatvec(self, y):
        raise NotImplementedError


class DenseOperator(LinearOperator):
    def __init__(self, matrix):
        matrix = _readonly(matrix)
        if matrix.ndim != 2:
            raise ConfigError("dense operator needs a 2-d array")
        super().__init__(*matrix.shape)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "kind", ("dense",))

    def _matvec(self, x):
        return self.matrix @ x

    def _rmatvec(self, y):
        return self.matrix.T @ y

    def to_dense(self):
        return np.array(self.matrix)


def _diff_adjoint(y):
    # transpose of the first difference: length L-1 -> L
    out = np.empty(y.size + 1)
    out[0] = -y[0]
    np.subtract(y[:-1], y[1:], out=out[1:-1])
    out[-1] = y[-1]
    return out


class UnivariateDiff(LinearOperator):
    """Order ``k+1`` discrete difference on a length-``n`` signal.

    Built as the ``k+1``-fold product of first differences, so each row
    holds an alternating-sign binomial stencil.
    """

    def __init__(self, n, order):
        super().__init__(n - order - 1, n)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "kind", ("univariate", order))

    def _matvec(self, x):
        for _ in range(self.order + 1):
            x = x[1:] - x[:-1]
        return x

    def _rmatvec(self, y):
        for _ in range(self.order + 1):
            y = _diff_adjoint(y)
        return y


@dataclass(frozen=True)
class GraphSpec:
    """Undirected graph on vertices ``1..n_vertices`` (1-indexed edges)."""

    n_vertices: int
    edges: tuple
    weights: tuple | None = None

    def __post_init__(self):
        if self.n_vertices < 1:
            raise ConfigError("graph needs at least one vertex")
        edges = tuple((int(u), int(v)) for u, v in self.edges)
        seen = set()
        for u, v in edges:
            if not (1 <= u < v <= self.n_vertices):
                raise ConfigError(
                    f"invalid edge ({u}, {v}): need 1 <= u < v <= {self.n_vertices}"
                )
            if (u, v) in seen:
                raise ConfigError(f"duplicate edge ({u}, {v})")
            seen.add((u, v))
        object.__setattr__(self, "edges", edges)
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if len(w) != len(edges):
                raise ConfigError("one weight per edge required")
            if any(x < 0 or not np.isfinite(x) for x in w):
                raise ConfigError("edge weights must be finite and nonnegative")
            object.__setattr__(self, "weights", w)

    @property
    def n_edges(self):
        return len(self.edges)


def grid_graph(h, w):
    """4-neighbour grid graph of an ``h x w`` image, vertices in row-major order."""
    if h < 1 or w < 1:
        raise ConfigError("grid dimensions must be positive")
    edges = []
    for r in range(h):
        for c in range(w):
            u = r * w + c + 1
            if c + 1 < w:
                edges.append((u, u + 1))
            if r + 1 < h:
                edges.append((u, u + w))
    return GraphSpec(h * w, tuple(edges))


class GraphDiff(LinearOperator):
    """Graph trend-filtering operator of order ``k+1``.

    ``Delta1`` has one row per edge, ``-w`` at the tail and ``+w`` at the
    head. Higher orders alternate ``Delta1.T`` (odd ``k``) and ``Delta1``
    (even ``k``), so the row count is ``m`` for even ``k`` and ``n`` for odd.
    """

    def __init__(self, graph: GraphSpec, order):
        if graph.n_edges == 0:
            raise ConfigError("graph difference operator needs at least one edge")
        n, m = graph.n_vertices, graph.n_edges
        super().__init__(m if order % 2 == 0 else n, n)
        e = np.asarray(graph.edges, dtype=np.intp) - 1
        w = np.ones(m) if graph.weights is None else np.asarray(graph.weights, dtype=float)
        object.__setattr__(self, "graph", graph)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "kind", ("graph", order))
        object.__setattr__(self, "_tail", _readonly(e[:, 0], np.intp))
        object.__setattr__(self, "_head", _readonly(e[:, 1], np.intp))
        object.__setattr__(self, "_w", _readonly(w))

    def _d1(self, x):
        return self._w * (x[self._head] - x[self._tail])

    def _d1t(self, z):
        n = self.graph.n_vertices
        wz = self._w * z
        return np.bincount(self._head, wz, n) - np.bincount(self._tail, wz, n)

    def _matvec(self, x):
        for j in range(self.order + 1):
            x = self._d1(x) if j % 2 == 0 else self._d1t(x)
        return x

    def _rmatvec(self, y):
        for j in reversed(range(self.order + 1)):
            y = self._d1t(y) if j % 2 == 0 else self._d1(y)
        return y


@dataclass(frozen=True)
class ClusterSpec:
    """Convex-clustering layout: ``n_points`` centres in ``dim`` dimensions.

    ``weights`` is a symmetric ``(n, n)`` nonnegative array; ``None`` means
    all pairwise weights equal one.
    """

    n_points: int
    dim: int = 1
    weights: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n_points < 2 or self.dim < 1:
            raise ConfigError("clustering needs n_points >= 2 and dim >= 1")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.n_points, self.n_points):
                raise ConfigError(f"weights must be {self.n_points}x{self.n_points}")
            if not np.allclose(w, w.T) or np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ConfigError("weights must be symmetric, finite and nonnegative")
            object.__setattr__(self, "weights", _readonly(w))

    def pair_weights(self):
        pairs = list(combinations(range(self.n_points), 2))
        if self.weights is None:
            return pairs, np.ones(len(pairs))
        return pairs, np.array([self.weights[i, j] for i, j in pairs])


class ClusterDiff(LinearOperator):
    """Pairwise weighted differences of cluster centres.

    Rows come in blocks of ``dim``, one block per pair ``(i, j)``, ``i < j``,
    in lexicographic order: ``w_ij * (beta_i - beta_j)``.
    """

    def __init__(self, spec: ClusterSpec):
        pairs, w = spec.pair_weights()
        n, p = spec.n_points, spec.dim
        super().__init__(len(pairs) * p, n * p)
        idx = np.asarray(pairs, dtype=np.intp)
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "kind", ("cluster",))
        object.__setattr__(self, "_i", _readonly(idx[:, 0], np.intp))
        object.__setattr__(self, "_j", _readonly(idx[:, 1], np.intp))
        object.__setattr__(self, "_w", _readonly(w))

    def _matvec(self, x):
        b = x.reshape(self.spec.n_points, self.spec.dim)
        return (self._w[:, None] * (b[self._i] - b[self._j])).ravel()

    def _rmatvec(self, y):
        n, p = self.spec.n_points, self.spec.dim
        wy = self._w[:, None] * y.reshape(-1, p)
        out = np.zeros((n, p))
        np.add.at(out, self._i, wy)
        np.add.at(out, self._j, -wy)
        return out.ravel()


def build_univariate_diff(n, k):
    """Trend-filtering difference operator ``D^(k+1)`` of shape ``(n-k-1, n)``."""
    if k < 0:
        raise ConfigError(f"trend order must be >= 0, got {k}")
    if n < k + 2:
        raise ConfigError(f"signal length {n} too short for order {k} (need n >= {k + 2})")
    return UnivariateDiff(n, k)


def build_graph_diff(g: GraphSpec, k):
    if k < 0:
        raise ConfigError(f"trend order must be >= 0, got {k}")
    return GraphDiff(g, k)


def build_cluster_diff(c: ClusterSpec):
    return ClusterDiff(c)


def estimate_sigma(op: LinearOperator, tol=1e-8, max_iters=5000, seed=0):
    """Largest eigenvalue of ``D D^T`` by power iteration.

    Rayleigh quotients of the iterates increase monotonically towards the
    answer. Convergence is declared once the geometric tail implied by the
    last two increments falls below ``tol`` relative, which keeps accuracy
    on slowly separating spectra where a plain increment test stops early.

    Raises:
        NumericalError: if ``max_iters`` is exhausted; ``context["rayleigh"]``
            holds the last quotient.
    """
    if tol <= 0:
        raise ConfigError("tol must be positive")
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(op.rows)
    y /= np.linalg.norm(y)
    theta_prev = delta_prev = None
    theta = 0.0
    for it in range(1, max_iters + 1):
        z = op.apply(op.apply_adjoint(y))
        theta = float(y @ z)
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return 0.0
        y = z / nz
        if theta_prev is not None:
            delta = max(theta - theta_prev, 0.0)
            if delta <= tol * theta:
                if delta == 0.0:
                    return theta
                if delta_prev:
                    q = delta / delta_prev
                    if q < 1.0 and delta * q / (1.0 - q) <= tol * theta:
                        logger.debug("estimate_sigma converged after %d iterations", it)
                        return theta
            delta_prev = delta
        theta_prev = theta
    raise NumericalError(
        f"power iteration did not converge in {max_iters} iterations "
        f"(last Rayleigh quotient {theta:.17g})",
        rayleigh=theta,
        iterations=max_iters,
    )
