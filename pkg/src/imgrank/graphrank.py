"""kNN affinity graphs and manifold ranking.

Scores follow ``f = (I - alpha S)^-1 y`` where ``S = D^-1/2 W D^-1/2`` is the
symmetrically normalized affinity matrix and ``y`` the query indicator.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

AUTO = "AUTO"


class RankingError(RuntimeError):
    pass


@dataclass(frozen=True)
class AffinityGraph:
    W: np.ndarray
    S: np.ndarray
    sigma: float

    @property
    def n(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class RankingResult:
    query: int
    scores: np.ndarray
    alpha: float
    iterations: int | str
    converged: bool = True


def _check_k(n, k_g):
    if n < 2:
        raise ValueError("graph needs at least 2 nodes")
    if not 1 <= k_g <= n - 1:
        raise ValueError(f"k_g={k_g} out of range [1, {n - 1}]")


def _neighbors(dist, k_g):
    dist = dist.copy()
    np.fill_diagonal(dist, np.inf)
    # stable sort: equal distances resolve to the lower index
    order = np.argsort(dist, axis=1, kind="stable")[:, :k_g]
    return order, np.take_along_axis(dist, order, axis=1)


def auto_sigma(vectors, k_g) -> float:
    """Median over points of the distance to the ``k_g``-th nearest neighbor.

    Falls back to 1.0 when that median is zero.
    """
    X = np.asarray(vectors, dtype=np.float64)
    _check_k(X.shape[0], k_g)
    _, nd = _neighbors(cdist(X, X), k_g)
    sigma = float(np.median(nd[:, -1]))
    return sigma if sigma > 0 else 1.0


def normalize_affinity(W) -> np.ndarray:
    deg = W.sum(axis=1)
    inv = np.zeros_like(deg)
    nz = deg > 0
    inv[nz] = 1.0 / np.sqrt(deg[nz])
    S = inv[:, None] * W * inv[None, :]
    return 0.5 * (S + S.T)


def build_knn_graph(vectors, k_g=10, sigma=AUTO) -> AffinityGraph:
    """Gaussian-weighted kNN graph, symmetrized by elementwise max."""
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("vectors must be a 2-D matrix")
    n = X.shape[0]
    _check_k(n, k_g)
    nbr, nd = _neighbors(cdist(X, X), k_g)
    if sigma is None or (isinstance(sigma, str) and sigma.upper() == AUTO):
        sigma = float(np.median(nd[:, -1]))
        if sigma <= 0:
            sigma = 1.0
    sigma = float(sigma)
    if not sigma > 0:
        raise ValueError("sigma must be positive")

    W = np.zeros((n, n))
    rows = np.repeat(np.arange(n), k_g)
    W[rows, nbr.ravel()] = np.exp(-nd.ravel() ** 2 / (2.0 * sigma ** 2))
    W = np.maximum(W, W.T)
    np.fill_diagonal(W, 0.0)
    return AffinityGraph(W=W, S=normalize_affinity(W), sigma=sigma)


def graph_from_weights(W) -> AffinityGraph:
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError("weight matrix must be square")
    if not np.array_equal(W, W.T) or np.any(np.diag(W) != 0) or np.any(W < 0):
        raise ValueError("weights must be symmetric, nonnegative, zero-diagonal")
    return AffinityGraph(W=W, S=normalize_affinity(W), sigma=float("nan"))


def _check_alpha(alpha):
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")


def _check_query(graph, query):
    if not 0 <= query < graph.n:
        raise IndexError(f"query {query} out of range for {graph.n} nodes")


class RankingSolver:
    """Cholesky factorization of ``I - alpha S``, reusable across queries."""

    def __init__(self, graph: AffinityGraph, alpha: float):
        _check_alpha(alpha)
        self.graph = graph
        self.alpha = float(alpha)
        A = np.eye(graph.n) - self.alpha * graph.S
        try:
            self._factor = scipy.linalg.cho_factor(A, lower=True, check_finite=True)
        except np.linalg.LinAlgError as exc:
            raise RankingError(f"I - alpha*S is singular or indefinite: {exc}") from exc

    def solve(self, Y) -> np.ndarray:
        return scipy.linalg.cho_solve(self._factor, Y)

    def rank(self, queries) -> np.ndarray:
        """Score columns for each query index; shape ``(n, len(queries))``."""
        queries = np.asarray(queries, dtype=np.int64)
        Y = np.zeros((self.graph.n, queries.size))
        Y[queries, np.arange(queries.size)] = 1.0
        return self.solve(Y)


def manifold_rank_closed(graph: AffinityGraph, query: int, alpha: float = 0.99) -> RankingResult:
    _check_query(graph, query)
    f = RankingSolver(graph, alpha).rank([query])[:, 0]
    return RankingResult(query=query, scores=f, alpha=alpha, iterations="closed-form")


def manifold_rank_iterative(graph: AffinityGraph, query: int, alpha: float = 0.99,
                            tol: float = 1e-12, max_iter: int = 100000) -> RankingResult:
    """Fixed-point iteration ``f <- alpha S f + (1 - alpha) y`` from ``f = y``.

    The fixed point is ``(1 - alpha)`` times the closed-form scores, so the
    returned scores are divided by ``1 - alpha`` to be directly comparable.
    """
    _check_alpha(alpha)
    _check_query(graph, query)
    if tol <= 0:
        raise ValueError("tol must be positive")
    y = np.zeros(graph.n)
    y[query] = 1.0
    f = y.copy()
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        nxt = alpha * (graph.S @ f) + (1.0 - alpha) * y
        delta = np.max(np.abs(nxt - f))
        f = nxt
        if delta < tol:
            converged = True
            break
    return RankingResult(query=query, scores=f / (1.0 - alpha), alpha=alpha,
                         iterations=it, converged=converged)


def similarity_matrix(graph: AffinityGraph, alpha: float = 0.99) -> np.ndarray:
    """Row ``i`` holds the ranking scores for query ``i``."""
    solver = RankingSolver(graph, alpha)
    return solver.solve(np.eye(graph.n)).T


def write_graph_dump(graph: AffinityGraph, path) -> None:
    i, j = np.nonzero(np.triu(graph.W, k=1))
    lines = [f"{a} {b} {graph.W[a, b]:.17g}" for a, b in zip(i, j)]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
