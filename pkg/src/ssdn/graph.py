"""
Weighted undirected communication graphs and their Laplacians.

The Kronecker-lifted Laplacian ``L_n (x) I_q`` is never materialised; the
per-agent neighbour sums computed by :meth:`Graph.neighbor_sum` apply it row
by row to an ``(n, q)`` array of agent states.
"""

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Graph",
    "GraphError",
    "LaplacianData",
    "ConvergenceError",
    "build_graph",
    "from_edges",
    "path_graph",
    "laplacian",
    "is_connected",
]

DENSE_EIG_LIMIT = 256


class GraphError(ValueError):
    """Invalid weight matrix or edge list."""


class ConvergenceError(RuntimeError):
    """Raised when power iteration fails to reach its tolerance."""

    def __init__(self, message, iterations):
        super().__init__(message)
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class Graph:
    """Validated weighted undirected graph.

    Use :func:`build_graph` or :func:`from_edges` rather than the constructor.
    Nodes are 0-based internally; scenario files use 1-based indices.
    """

    weights: np.ndarray
    neighbors: tuple = field(repr=False)

    @property
    def n(self):
        return self.weights.shape[0]

    @cached_property
    def _edges(self):
        # directed edge arrays sorted by (i, j); each undirected edge appears twice
        rows, cols = [], []
        for i, nbrs in enumerate(self.neighbors):
            rows.extend([i] * len(nbrs))
            cols.extend(nbrs)
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        w = self.weights[rows, cols]
        active = np.array([i for i, nb in enumerate(self.neighbors) if nb], dtype=np.intp)
        starts = np.searchsorted(rows, active)
        return rows, cols, w, active, starts

    @cached_property
    def degree(self):
        return self.weights.sum(axis=1)

    def edges(self):
        """Undirected edges as ``(i, j, weight)`` with ``i < j`` (0-based)."""
        return [(i, j, float(self.weights[i, j]))
                for i, nbrs in enumerate(self.neighbors) for j in nbrs if i < j]

    def neighbor_sum(self, u):
        """Return ``s_i = sum_j a_ij (u_i - u_j)`` for every node.

        Neighbours are summed in ascending index order, so the result is a
        deterministic function of ``u``. The node axis of ``u`` is axis 0;
        trailing axes (coordinates, time samples) are carried along.
        """
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        rows, cols, w, active, starts = self._edges
        if rows.size == 0:
            return out
        diffs = w.reshape((-1,) + (1,) * (u.ndim - 1)) * (u[rows] - u[cols])
        out[active] = np.add.reduceat(diffs, starts, axis=0)
        return out

    def quadratic_form(self, u, w=None):
        """``u^T (L (x) I) w`` computed through neighbour sums."""
        w = u if w is None else w
        return float(np.sum(np.asarray(u) * self.neighbor_sum(w)))

    @cached_property
    def connected(self):
        return is_connected(self)

    @cached_property
    def spectrum(self):
        return laplacian(self)


@dataclass(frozen=True, eq=False)
class LaplacianData:
    """Laplacian matrix and its spectral data.

    ``eigenvalues`` is the full ascending spectrum when a dense eigensolver was
    used, otherwise ``None``. ``iterations`` is 0 for the dense path.
    """

    L: np.ndarray
    lambda_max: float
    eigenvalues: np.ndarray = None
    iterations: int = 0

    @property
    def fiedler(self):
        if self.eigenvalues is None or len(self.eigenvalues) < 2:
            return None
        return float(self.eigenvalues[1])


def build_graph(weights):
    """Validate a symmetric nonnegative weight matrix and build a :class:`Graph`.

    Raises
    ------
    GraphError
        For non-square or non-finite input, asymmetric entries, negative
        weights or a nonzero diagonal. The message names the first offending
        ``(i, j)`` pair (1-based).
    """
    A = np.array(weights, dtype=float, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise GraphError(f"weight matrix must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        i, j = np.argwhere(~np.isfinite(A))[0]
        raise GraphError(f"non-finite weight at ({i + 1}, {j + 1})")
    diag = np.flatnonzero(np.diag(A))
    if diag.size:
        i = diag[0]
        raise GraphError(f"nonzero diagonal entry a[{i + 1},{i + 1}] = {A[i, i]}")
    neg = np.argwhere(A < 0)
    if neg.size:
        i, j = neg[0]
        raise GraphError(f"negative weight a[{i + 1},{j + 1}] = {A[i, j]}")
    asym = np.argwhere(A != A.T)
    if asym.size:
        i, j = asym[0]
        raise GraphError(
            f"asymmetric weights: a[{i + 1},{j + 1}] = {A[i, j]} but "
            f"a[{j + 1},{i + 1}] = {A[j, i]}")
    A.setflags(write=False)
    neighbors = tuple(tuple(int(j) for j in np.flatnonzero(A[i])) for i in range(A.shape[0]))
    return Graph(A, neighbors)


def from_edges(n, edges):
    """Build a graph from 1-based ``(i, j, weight)`` triples or ``{i, j, weight}`` dicts."""
    if n < 1:
        raise GraphError(f"node count must be positive, got {n}")
    A = np.zeros((n, n))
    for k, e in enumerate(edges):
        if isinstance(e, dict):
            i, j, w = e["i"], e["j"], e.get("weight", 1.0)
        else:
            i, j, w = (*e, 1.0)[:3]
        if not (1 <= i <= n and 1 <= j <= n):
            raise GraphError(f"edge {k}: node index out of range 1..{n}: ({i}, {j})")
        if i == j:
            raise GraphError(f"edge {k}: self loop at node {i}")
        if A[i - 1, j - 1] != 0:
            raise GraphError(f"edge {k}: duplicate edge ({i}, {j})")
        A[i - 1, j - 1] = A[j - 1, i - 1] = w
    return build_graph(A)


def path_graph(n, weight=1.0):
    return from_edges(n, [(i, i + 1, weight) for i in range(1, n)])


def _power_iteration(L, tol=1e-9, max_iter=10000):
    n = L.shape[0]
    # deterministic start vector with no component along the all-ones kernel
    x = np.cos(np.arange(1, n + 1) * 1.2345)
    x -= x.mean()
    x /= np.linalg.norm(x)
    lam = 0.0
    for k in range(1, max_iter + 1):
        y = L @ x
        lam_new = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0, k
        x = y / ny
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            return lam_new, k
        lam = lam_new
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations", max_iter)


def laplacian(g):
    """Return ``L = D - A`` and its largest eigenvalue.

    A dense symmetric eigensolver is used up to 256 nodes; larger graphs use
    power iteration with a Rayleigh-quotient stopping rule (relative
    tolerance 1e-9, at most 10000 iterations).
    """
    A = g.weights
    L = np.diag(A.sum(axis=1)) - A
    L.setflags(write=False)
    if g.n <= DENSE_EIG_LIMIT:
        ev = np.linalg.eigvalsh(L)
        return LaplacianData(L, max(float(ev[-1]), 0.0), ev, 0)
    lam, iters = _power_iteration(L)
    return LaplacianData(L, lam, None, iters)


def is_connected(g):
    """Breadth-first reachability from the first node."""
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in g.neighbors[i]:
            if not seen[j]:
                seen[j] = True
                queue.append(j)
    return bool(seen.all())
