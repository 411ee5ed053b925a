"""Incidence matrices, weighted Laplacians, and Schur-complement reduction.

Nodes are integers 0..n-1.  Every edge carries a fixed orientation (tail,
head) that only determines signs in the incidence matrix; the graphs are
otherwise undirected.  Edge weights are strictly positive.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .errors import RegularityError

__all__ = [
    "UndirectedGraph",
    "NodePartition",
    "ProjectedIncidence",
    "incidence_matrix",
    "weighted_laplacian",
    "is_connected",
    "schur_complement",
    "kernel_projection",
    "projected_incidence",
    "kron_edge_recovery",
    "as_edge_weights",
]

#: Relative drop tolerance for edge detection in ``kron_edge_recovery``.
KRON_DROP_TOLERANCE = 1e-9


def _readonly(values, dtype=float) -> np.ndarray:
    out = np.array(values, dtype=dtype)
    out.setflags(write=False)
    return out


def as_edge_weights(weights, edge_count: int) -> np.ndarray:
    """Validate a positive weight vector of the given length."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (edge_count,):
        raise ValueError(f"expected {edge_count} edge weights, got shape {w.shape}")
    if edge_count and not np.all(w > 0.0):
        raise ValueError("edge weights must be positive")
    return w


@dataclass(frozen=True)
class UndirectedGraph:
    """Simple graph with a stored edge orientation.

    ``edges`` holds one ``(tail, head)`` pair per edge.  Self-loops and
    parallel edges are rejected.  Use :meth:`from_pairs` for the default
    orientation (tail = smaller node index); passing pairs directly keeps
    the given orientation.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("graph needs at least one node")
        edges = tuple((int(i), int(j)) for i, j in self.edges)
        object.__setattr__(self, "edges", edges)
        seen = set()
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise ValueError(f"edge ({i}, {j}) out of range for {self.node_count} nodes")
            key = (i, j) if i < j else (j, i)
            if key in seen:
                raise ValueError(f"duplicate edge between nodes {key[0]} and {key[1]}")
            seen.add(key)

    @classmethod
    def from_pairs(cls, node_count: int, pairs) -> "UndirectedGraph":
        """Build a graph with the default orientation tail = min(i, j)."""
        oriented = tuple((min(int(i), int(j)), max(int(i), int(j))) for i, j in pairs)
        return cls(node_count, oriented)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def endpoint_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Tail and head node indices as integer arrays."""
        if not self.edges:
            empty = np.empty(0, dtype=int)
            return empty, empty.copy()
        arr = np.asarray(self.edges, dtype=int)
        return arr[:, 0], arr[:, 1]


def incidence_matrix(graph: UndirectedGraph) -> np.ndarray:
    """Node-by-edge incidence matrix: +1 at the tail, -1 at the head."""
    b = np.zeros((graph.node_count, graph.edge_count))
    for k, (i, j) in enumerate(graph.edges):
        b[i, k] = 1.0
        b[j, k] = -1.0
    return b


def weighted_laplacian(incidence, weights) -> np.ndarray:
    """Weighted Laplacian B diag(w) B^T for an incidence matrix B."""
    b = np.asarray(incidence, dtype=float)
    if b.ndim != 2:
        raise ValueError("incidence matrix must be 2-d")
    w = as_edge_weights(weights, b.shape[1])
    lap = (b * w) @ b.T
    return 0.5 * (lap + lap.T)


def is_connected(graph: UndirectedGraph) -> bool:
    """Breadth-first reachability of every node from node 0."""
    n = graph.node_count
    if n == 1:
        return True
    adjacency: list[list[int]] = [[] for _ in range(n)]
    for i, j in graph.edges:
        adjacency[i].append(j)
        adjacency[j].append(i)
    seen = [False] * n
    seen[0] = True
    queue = deque([0])
    count = 1
    while queue:
        node = queue.popleft()
        for other in adjacency[node]:
            if not seen[other]:
                seen[other] = True
                count += 1
                queue.append(other)
    return count == n


@dataclass(frozen=True)
class NodePartition:
    """Split of the node set into retained and eliminated index tuples."""

    retained: tuple[int, ...]
    eliminated: tuple[int, ...]

    def __post_init__(self):
        retained = tuple(int(i) for i in self.retained)
        eliminated = tuple(int(i) for i in self.eliminated)
        object.__setattr__(self, "retained", retained)
        object.__setattr__(self, "eliminated", eliminated)
        if not retained:
            raise ValueError("partition must retain at least one node")
        if min(retained + eliminated) < 0:
            raise ValueError("node indices must be non-negative")
        union = set(retained) | set(eliminated)
        if len(union) != len(retained) + len(eliminated):
            raise ValueError("retained and eliminated sets must be disjoint")

    @classmethod
    def leading(cls, node_count: int, retained_count: int) -> "NodePartition":
        """Retain the first ``retained_count`` nodes, eliminate the rest."""
        if not 1 <= retained_count <= node_count:
            raise ValueError("retained_count out of range")
        return cls(tuple(range(retained_count)), tuple(range(retained_count, node_count)))

    def check_covers(self, node_count: int) -> None:
        indices = self.retained + self.eliminated
        if len(indices) != node_count or max(indices) >= node_count:
            raise ValueError(f"partition does not cover exactly the {node_count} nodes")


def _spd_cholesky(matrix: np.ndarray, context: str) -> np.ndarray:
    """Cholesky factor of an SPD matrix, or a RegularityError."""
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError as exc:
        raise RegularityError(
            f"{context}: eliminated block is not positive definite "
            "(graph disconnected, bad partition, or weights degenerated)"
        ) from exc


def schur_complement(laplacian, partition: NodePartition) -> np.ndarray:
    """Schur complement of the eliminated block of a weighted Laplacian.

    Rows and columns of the result follow the order of ``partition.retained``.
    Eliminating nothing returns the retained submatrix unchanged.
    """
    lap = np.asarray(laplacian, dtype=float)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise ValueError("laplacian must be square")
    partition.check_covers(lap.shape[0])
    keep = list(partition.retained)
    drop = list(partition.eliminated)
    if not drop:
        return lap[np.ix_(keep, keep)].copy()
    l11 = lap[np.ix_(keep, keep)]
    l12 = lap[np.ix_(keep, drop)]
    l22 = lap[np.ix_(drop, drop)]
    chol = _spd_cholesky(l22, "schur_complement")
    reduced = l11 - l12 @ cho_solve((chol, True), l12.T)
    return 0.5 * (reduced + reduced.T)


def kernel_projection(b_eliminated, weights) -> np.ndarray:
    """Weight-orthogonal projection onto the kernel of the eliminated incidence.

    For eliminated rows B2 and weights w this is I - W B2^T (B2 W B2^T)^-1 B2
    with W = diag(w).  The projector is idempotent and W-self-adjoint.  An
    empty B2 (nothing eliminated) yields the identity.
    """
    b2 = np.asarray(b_eliminated, dtype=float)
    if b2.ndim != 2:
        raise ValueError("eliminated incidence must be 2-d")
    m = b2.shape[1]
    w = as_edge_weights(weights, m)
    if b2.shape[0] == 0:
        return np.eye(m)
    gram = (b2 * w) @ b2.T
    chol = _spd_cholesky(gram, "kernel_projection")
    solved = cho_solve((chol, True), b2)
    return np.eye(m) - (w[:, None] * b2.T) @ solved


@dataclass(frozen=True)
class ProjectedIncidence:
    """Retained incidence composed with the kernel projector.

    ``matrix`` is B1 @ projection; ``projection`` annihilates the eliminated
    incidence rows; ``weights`` are the edge weights the projector was built
    with.
    """

    matrix: np.ndarray
    projection: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        projection = np.asarray(self.projection, dtype=float)
        weights = as_edge_weights(self.weights, projection.shape[0])
        m = projection.shape[0]
        if projection.shape != (m, m) or matrix.shape[1] != m:
            raise ValueError("inconsistent projected incidence shapes")
        scale = max(1.0, float(np.abs(projection).max(initial=0.0)))
        if np.abs(projection @ projection - projection).max(initial=0.0) > 1e-8 * scale:
            raise ValueError("projection matrix is not idempotent")
        for name, value in (("matrix", matrix), ("projection", projection), ("weights", weights)):
            value = np.array(value)
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def retained_count(self) -> int:
        return self.matrix.shape[0]

    @property
    def edge_count(self) -> int:
        return self.matrix.shape[1]


def projected_incidence(b_retained, b_eliminated, weights) -> ProjectedIncidence:
    """Projected incidence matrix of a retained/eliminated incidence split."""
    b1 = np.asarray(b_retained, dtype=float)
    b2 = np.asarray(b_eliminated, dtype=float)
    if b1.ndim != 2 or b2.ndim != 2 or b1.shape[1] != b2.shape[1]:
        raise ValueError("incidence blocks must share the edge dimension")
    pi = kernel_projection(b2, weights)
    return ProjectedIncidence(b1 @ pi, pi, np.asarray(weights, dtype=float))


def kron_edge_recovery(
    reduced_laplacian, drop_tolerance: float = KRON_DROP_TOLERANCE
) -> tuple[UndirectedGraph, np.ndarray]:
    """Recover a weighted graph from a reduced Laplacian.

    Off-diagonal entries below ``drop_tolerance`` relative to the largest
    off-diagonal magnitude are treated as fill-in noise and dropped.  The
    input must be symmetric with zero row sums and no significantly positive
    off-diagonal entries.

    Returns the recovered graph (default orientation) and its edge weights.
    """
    lap = np.asarray(reduced_laplacian, dtype=float)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise ValueError("reduced laplacian must be square")
    n = lap.shape[0]
    off = lap.copy()
    np.fill_diagonal(off, 0.0)
    scale = float(np.abs(off).max(initial=0.0))
    tol = drop_tolerance * max(scale, 1.0)
    if np.abs(lap - lap.T).max(initial=0.0) > tol:
        raise ValueError("not a Laplacian: matrix is not symmetric")
    if np.abs(lap.sum(axis=1)).max(initial=0.0) > tol:
        raise ValueError("not a Laplacian: row sums are not zero")
    if off.max(initial=0.0) > tol:
        raise ValueError("not a Laplacian: positive off-diagonal entry")
    edges = []
    weights = []
    threshold = drop_tolerance * scale
    for i in range(n):
        for j in range(i + 1, n):
            weight = -lap[i, j]
            if weight > threshold:
                edges.append((i, j))
                weights.append(weight)
    graph = UndirectedGraph(n, tuple(edges))
    return graph, _readonly(weights)
